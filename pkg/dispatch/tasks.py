"""
Celery tasks for experiment runs.
"""

import logging

from celery import shared_task

from .services.experiment_service import ExperimentService

logger = logging.getLogger(__name__)


@shared_task(bind=True, max_retries=3, default_retry_delay=60)
def run_experiment(self, run_id):
    """
    Celery task to execute a queued experiment run.

    Domain failures are recorded on the run by the service; only
    unexpected errors (database, broker) are retried.

    Args:
        run_id: ID of the ExperimentRun to execute

    Returns:
        dict: Result of the operation
    """
    try:
        return ExperimentService.execute(run_id).to_dict()

    except Exception as exc:
        logger.exception(f"Unexpected error in task for run {run_id}: {exc}")
        raise self.retry(exc=exc)


@shared_task
def cleanup_stuck_runs():
    """
    Periodic task to fail runs stuck in 'running' status.

    A worker that dies mid-run leaves its run in 'running'; anything not
    updated for SDD_STUCK_RUN_MINUTES is marked failed.

    Returns:
        dict: Number of runs cleaned up
    """
    from datetime import timedelta

    from django.conf import settings
    from django.utils import timezone

    from .models import ExperimentRun

    stuck_threshold = timezone.now() - timedelta(minutes=settings.SDD_STUCK_RUN_MINUTES)
    stuck = ExperimentRun.objects.filter(
        status=ExperimentRun.Status.RUNNING, updated_at__lt=stuck_threshold
    )

    count = stuck.update(
        status=ExperimentRun.Status.FAILED,
        error_code="internal",
        error_message="Timeout: stuck in running status",
        finished_at=timezone.now(),
    )

    if count:
        logger.warning(f"Cleaned up {count} stuck experiment runs")

    return {"cleaned_up": count}
