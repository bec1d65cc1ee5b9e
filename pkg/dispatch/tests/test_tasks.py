import shutil
import tempfile
from datetime import timedelta
from pathlib import Path
from unittest.mock import patch

from django.conf import settings
from django.test import TestCase, override_settings
from django.utils import timezone

from dispatch.models import ExperimentRun
from dispatch.services.experiment_service import ExperimentService
from dispatch.tasks import cleanup_stuck_runs, run_experiment

TOY_CONFIG = str(Path(settings.BASE_DIR) / "configs" / "toy.env")


class CleanupStuckRunsTests(TestCase):
    def _running(self, minutes_ago):
        run = ExperimentRun.objects.create(kind="train", status=ExperimentRun.Status.RUNNING)
        ExperimentRun.objects.filter(pk=run.pk).update(
            updated_at=timezone.now() - timedelta(minutes=minutes_ago)
        )
        return run

    @override_settings(SDD_STUCK_RUN_MINUTES=60)
    def test_only_stale_runs_fail(self):
        stale = self._running(90)
        fresh = self._running(5)

        result = cleanup_stuck_runs()

        self.assertEqual(result, {"cleaned_up": 1})
        stale.refresh_from_db()
        fresh.refresh_from_db()
        self.assertEqual(stale.status, ExperimentRun.Status.FAILED)
        self.assertEqual(stale.error_code, "internal")
        self.assertIsNotNone(stale.finished_at)
        self.assertEqual(fresh.status, ExperimentRun.Status.RUNNING)

    def test_nothing_to_clean(self):
        ExperimentRun.objects.create(kind="gen", status=ExperimentRun.Status.COMPLETED)

        self.assertEqual(cleanup_stuck_runs(), {"cleaned_up": 0})


class RunExperimentTaskTests(TestCase):
    def setUp(self):
        self.artifacts = tempfile.mkdtemp(prefix="sdd-task-")
        self.addCleanup(shutil.rmtree, self.artifacts, ignore_errors=True)

    def test_executes_run(self):
        with override_settings(SDD_ARTIFACTS_DIR=self.artifacts, SDD_CONFIG_PATH=TOY_CONFIG):
            run = ExperimentService.create_run("gen", {"days": 1})
            result = run_experiment(run.id)

        self.assertEqual(result["status"], "completed")
        self.assertEqual(result["run_id"], run.id)
        run.refresh_from_db()
        self.assertEqual(run.status, ExperimentRun.Status.COMPLETED)

    def test_domain_failure_is_returned_not_retried(self):
        with override_settings(SDD_ARTIFACTS_DIR=self.artifacts, SDD_CONFIG_PATH=TOY_CONFIG):
            run = ExperimentService.create_run("tune", {"family": "random"})
            result = run_experiment(run.id)

        self.assertEqual(result["status"], "failed")
        self.assertEqual(result["error_code"], "usage")

    @patch("dispatch.tasks.ExperimentService.execute", side_effect=RuntimeError("database gone"))
    def test_unexpected_error_is_retried(self, mock_execute):
        with self.assertRaises(RuntimeError):
            run_experiment(1)

        mock_execute.assert_called_once_with(1)
