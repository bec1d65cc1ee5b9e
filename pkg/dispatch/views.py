"""
DRF Views for the dispatch app.
"""

import logging
import math

from django.db import models
from rest_framework import mixins, status, viewsets
from rest_framework.decorators import action
from rest_framework.response import Response

from .models import ExperimentRun
from .serializers import (
    CellResultSerializer,
    ExperimentRunCreateSerializer,
    ExperimentRunSerializer,
)
from .services.experiment_service import ExperimentService
from .tasks import run_experiment

logger = logging.getLogger(__name__)


def _json_safe(row):
    # degenerate paired tests carry infinite t statistics
    return {
        key: str(value) if isinstance(value, float) and not math.isfinite(value) else value
        for key, value in row.items()
    }


class ExperimentRunViewSet(
    mixins.CreateModelMixin,
    mixins.RetrieveModelMixin,
    mixins.ListModelMixin,
    viewsets.GenericViewSet,
):
    """
    ViewSet for tracked experiment runs.

    Endpoints:
    - POST /runs/ - Queue a new run
    - GET /runs/ - List all runs
    - GET /runs/{id}/ - Get a specific run
    - GET /runs/{id}/cells/ - Per-cell outcomes of an eval run
    - GET /runs/{id}/report/ - Report rows rebuilt from the stored cells
    - GET /runs/stats/ - Run counts per status
    """

    queryset = ExperimentRun.objects.all()
    filterset_fields = ["kind", "status"]
    ordering = ["-created_at"]

    def get_serializer_class(self):
        """Return appropriate serializer class"""
        if self.action == "create":
            return ExperimentRunCreateSerializer
        return ExperimentRunSerializer

    def create(self, request, *args, **kwargs):
        serializer = self.get_serializer(data=request.data)
        serializer.is_valid(raise_exception=True)
        data = serializer.validated_data

        run = ExperimentService.create_run(data["kind"], data.get("params", {}), data.get("seed", 0))
        run.mark_as_queued()
        run_experiment.delay(run.id)
        logger.info(f"Queued {run.kind} run {run.id}")

        return Response(ExperimentRunSerializer(run).data, status=status.HTTP_201_CREATED)

    @action(detail=True, methods=["get"])
    def cells(self, request, pk=None):
        run = self.get_object()
        return Response(CellResultSerializer(run.cells.all(), many=True).data)

    @action(detail=True, methods=["get"])
    def report(self, request, pk=None):
        """
        Evaluation report of a completed eval run.

        GET /runs/{id}/report/
        """
        run = self.get_object()
        if run.kind != ExperimentRun.Kind.EVAL or not run.cells.exists():
            return Response(
                {"detail": "Run has no evaluation cells"},
                status=status.HTTP_404_NOT_FOUND,
            )
        report = ExperimentService.report_for(run)
        return Response({"rows": [_json_safe(row) for row in report.rows]})

    @action(detail=False, methods=["get"])
    def stats(self, request):
        """
        Get run statistics.

        GET /runs/stats/
        """
        from django.db.models import Count

        stats = ExperimentRun.objects.aggregate(
            total=Count("id"),
            pending=Count("id", filter=models.Q(status=ExperimentRun.Status.PENDING)),
            queued=Count("id", filter=models.Q(status=ExperimentRun.Status.QUEUED)),
            running=Count("id", filter=models.Q(status=ExperimentRun.Status.RUNNING)),
            completed=Count(
                "id", filter=models.Q(status=ExperimentRun.Status.COMPLETED)
            ),
            failed=Count("id", filter=models.Q(status=ExperimentRun.Status.FAILED)),
        )

        return Response(stats)
