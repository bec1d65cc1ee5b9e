from django.db import models
from django.utils import timezone


class TimeStampedModel(models.Model):
    """Abstract base model with created_at and updated_at fields"""

    created_at = models.DateTimeField(auto_now_add=True)
    updated_at = models.DateTimeField(auto_now=True)

    class Meta:
        abstract = True


class ExperimentRun(TimeStampedModel):
    """One tracked invocation of gen/tune/train/eval/analyze/curves"""

    class Kind(models.TextChoices):
        GEN = "gen", "Generate sample paths"
        TUNE = "tune", "Tune threshold"
        TRAIN = "train", "Train network bank"
        EVAL = "eval", "Evaluate policy matrix"
        ANALYZE = "analyze", "Analytic thresholds"
        CURVES = "curves", "Probability curves"

    class Status(models.TextChoices):
        PENDING = "pending", "Pending"
        QUEUED = "queued", "Queued"
        RUNNING = "running", "Running"
        COMPLETED = "completed", "Completed"
        FAILED = "failed", "Failed"

    kind = models.CharField(max_length=20, choices=Kind.choices, db_index=True)
    status = models.CharField(
        max_length=20, choices=Status.choices, default=Status.PENDING, db_index=True
    )
    seed = models.BigIntegerField(default=0)

    # Command parameters and outcome (JSON)
    params = models.JSONField(default=dict, blank=True)
    result = models.JSONField(default=dict, blank=True)
    out_dir = models.CharField(max_length=500, blank=True)
    error_code = models.CharField(max_length=30, blank=True)
    error_message = models.TextField(null=True, blank=True)

    started_at = models.DateTimeField(null=True, blank=True)
    finished_at = models.DateTimeField(null=True, blank=True)

    class Meta:
        db_table = "experiment_runs"
        ordering = ["-created_at"]
        indexes = [
            models.Index(fields=["kind", "status"], name="experiment_kind_status_idx"),
            models.Index(fields=["created_at"], name="experiment_created_idx"),
        ]

    def __str__(self):
        return f"{self.kind} #{self.pk} ({self.status})"

    def mark_as_queued(self):
        self.status = self.Status.QUEUED
        self.save(update_fields=["status", "updated_at"])

    def mark_as_running(self):
        self.status = self.Status.RUNNING
        self.started_at = timezone.now()
        self.save(update_fields=["status", "started_at", "updated_at"])

    def mark_as_completed(self, result):
        self.status = self.Status.COMPLETED
        self.result = result
        self.finished_at = timezone.now()
        self.save(update_fields=["status", "result", "finished_at", "updated_at"])

    def mark_as_failed(self, error_code, error_message):
        self.status = self.Status.FAILED
        self.error_code = error_code
        self.error_message = error_message
        self.finished_at = timezone.now()
        self.save(
            update_fields=[
                "status",
                "error_code",
                "error_message",
                "finished_at",
                "updated_at",
            ]
        )


class CellResult(TimeStampedModel):
    """Per-day outcomes of one policy in one fleet x geography cell"""

    run = models.ForeignKey(
        ExperimentRun, on_delete=models.CASCADE, related_name="cells"
    )
    position = models.PositiveIntegerField(default=0)
    fleet_m = models.PositiveSmallIntegerField()
    fleet_n = models.PositiveSmallIntegerField()
    geography = models.CharField(max_length=20)
    policy = models.CharField(max_length=100)

    served = models.JSONField(default=list)
    requests = models.JSONField(default=list)

    class Meta:
        db_table = "cell_results"
        ordering = ["run", "position"]
        indexes = [
            models.Index(
                fields=["fleet_m", "fleet_n", "geography"], name="cell_fleet_geo_idx"
            ),
        ]

    def __str__(self):
        return f"({self.fleet_m}, {self.fleet_n}) {self.geography} {self.policy}"

    @property
    def mean_served(self):
        return sum(self.served) / len(self.served) if self.served else 0.0
