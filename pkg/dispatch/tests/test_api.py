from unittest.mock import patch

from django.test import SimpleTestCase, TestCase
from django.urls import reverse
from rest_framework import status
from rest_framework.test import APITestCase

from dispatch.models import CellResult, ExperimentRun


class ExperimentRunAPITests(APITestCase):
    """API-level tests for queueing and inspecting runs."""

    @patch("dispatch.views.run_experiment.delay")
    def test_create_run_queues_task(self, mock_delay):
        payload = {
            "kind": "eval",
            "seed": 3,
            "params": {"overrides": {"eval_days": 5, "policies": "pfa:tau=12;greedy"}},
        }

        response = self.client.post(reverse("run-list"), payload, format="json")

        self.assertEqual(response.status_code, status.HTTP_201_CREATED)
        run = ExperimentRun.objects.get()
        self.assertEqual(run.status, ExperimentRun.Status.QUEUED)
        self.assertEqual(run.kind, ExperimentRun.Kind.EVAL)
        self.assertEqual(run.seed, 3)
        self.assertTrue(run.out_dir.endswith(f"eval-{run.pk}"))
        self.assertEqual(response.data["id"], run.id)
        mock_delay.assert_called_once_with(run.id)

    @patch("dispatch.views.run_experiment.delay")
    def test_unknown_policy_rejected(self, mock_delay):
        payload = {"kind": "eval", "params": {"overrides": {"policies": ["pfa", "nearest"]}}}

        response = self.client.post(reverse("run-list"), payload, format="json")

        self.assertEqual(response.status_code, status.HTTP_400_BAD_REQUEST)
        self.assertIn("params", response.data)
        self.assertEqual(ExperimentRun.objects.count(), 0)
        mock_delay.assert_not_called()

    @patch("dispatch.views.run_experiment.delay")
    def test_invalid_payloads(self, mock_delay):
        for payload in (
            {"kind": "deploy"},
            {"kind": "gen", "seed": -1},
            {"kind": "gen", "params": {"colour": "red"}},
            {"kind": "gen", "params": {"overrides": "fleet_m=2"}},
        ):
            with self.subTest(payload=payload):
                response = self.client.post(reverse("run-list"), payload, format="json")
                self.assertEqual(response.status_code, status.HTTP_400_BAD_REQUEST)

        mock_delay.assert_not_called()

    def test_list_filters_by_kind(self):
        ExperimentRun.objects.create(kind="gen")
        ExperimentRun.objects.create(kind="train")

        response = self.client.get(reverse("run-list"), {"kind": "train"})

        self.assertEqual(response.status_code, status.HTTP_200_OK)
        self.assertEqual(response.data["count"], 1)
        self.assertEqual(response.data["results"][0]["kind"], "train")

    def test_stats_endpoint_returns_counts(self):
        ExperimentRun.objects.create(kind="gen", status=ExperimentRun.Status.PENDING)
        ExperimentRun.objects.create(kind="gen", status=ExperimentRun.Status.QUEUED)
        ExperimentRun.objects.create(kind="train", status=ExperimentRun.Status.RUNNING)
        ExperimentRun.objects.create(kind="eval", status=ExperimentRun.Status.FAILED)

        response = self.client.get(reverse("run-stats"))

        self.assertEqual(response.status_code, status.HTTP_200_OK)
        self.assertEqual(response.data["total"], 4)
        self.assertEqual(response.data["pending"], 1)
        self.assertEqual(response.data["queued"], 1)
        self.assertEqual(response.data["running"], 1)
        self.assertEqual(response.data["completed"], 0)
        self.assertEqual(response.data["failed"], 1)


class ReportAPITests(APITestCase):
    def setUp(self):
        self.run = ExperimentRun.objects.create(kind="eval", status=ExperimentRun.Status.COMPLETED)
        CellResult.objects.create(
            run=self.run, position=0, fleet_m=2, fleet_n=5, geography="homogeneous",
            policy="pfa_tau14", served=[10, 10, 10], requests=[20, 20, 20],
        )
        CellResult.objects.create(
            run=self.run, position=1, fleet_m=2, fleet_n=5, geography="homogeneous",
            policy="greedy", served=[12, 12, 12], requests=[20, 20, 20],
        )

    def test_report_rows(self):
        response = self.client.get(reverse("run-report", args=[self.run.id]))

        self.assertEqual(response.status_code, status.HTTP_200_OK)
        baseline, other = response.data["rows"]
        self.assertEqual(baseline["policy"], "pfa_tau14")
        self.assertIsNone(baseline["improvement_pct"])
        self.assertAlmostEqual(other["improvement_pct"], 20.0)
        # a constant per-day gain gives an infinite t statistic
        self.assertEqual(other["t_stat"], "inf")
        self.assertTrue(other["significant"])

    def test_cells(self):
        response = self.client.get(reverse("run-cells", args=[self.run.id]))

        self.assertEqual(response.status_code, status.HTTP_200_OK)
        self.assertEqual([cell["policy"] for cell in response.data], ["pfa_tau14", "greedy"])
        self.assertEqual(response.data[1]["mean_served"], 12.0)

    def test_report_needs_cells(self):
        run = ExperimentRun.objects.create(kind="gen")

        response = self.client.get(reverse("run-report", args=[run.id]))

        self.assertEqual(response.status_code, status.HTTP_404_NOT_FOUND)

    def test_run_detail_counts_cells(self):
        response = self.client.get(reverse("run-detail", args=[self.run.id]))

        self.assertEqual(response.data["cell_count"], 2)


class ExperimentRunModelTests(TestCase):
    """Unit tests for model helper methods."""

    def setUp(self):
        self.run = ExperimentRun.objects.create(kind="train")

    def test_mark_as_completed_stores_result(self):
        self.run.mark_as_running()
        self.run.mark_as_completed({"checkpoint": "bank.sdqb"})

        self.run.refresh_from_db()
        self.assertEqual(self.run.status, ExperimentRun.Status.COMPLETED)
        self.assertIsNotNone(self.run.started_at)
        self.assertIsNotNone(self.run.finished_at)
        self.assertEqual(self.run.result, {"checkpoint": "bank.sdqb"})

    def test_mark_as_failed_records_code(self):
        self.run.mark_as_failed("io", "disk full")

        self.run.refresh_from_db()
        self.assertEqual(self.run.status, ExperimentRun.Status.FAILED)
        self.assertEqual(self.run.error_code, "io")
        self.assertEqual(self.run.error_message, "disk full")

    def test_cell_mean_served(self):
        cell = CellResult.objects.create(
            run=self.run, fleet_m=1, fleet_n=2, geography="homogeneous", policy="greedy",
            served=[1, 2, 6], requests=[3, 3, 6],
        )

        self.assertEqual(cell.mean_served, 3.0)


class ServerEntryPointTests(SimpleTestCase):
    def test_asgi_and_wsgi_applications(self):
        from django.core.handlers.asgi import ASGIHandler
        from django.core.handlers.wsgi import WSGIHandler

        from core.asgi import application as asgi_application
        from core.wsgi import application as wsgi_application

        self.assertIsInstance(asgi_application, ASGIHandler)
        self.assertIsInstance(wsgi_application, WSGIHandler)
