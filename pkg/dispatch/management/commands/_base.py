"""
Shared plumbing for the experiment management commands.

Every command creates a tracked ExperimentRun, then either executes it
inline through ExperimentService or queues it for a Celery worker.
"""

import argparse
import json

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from ...exceptions import ConfigError
from ...services.config import load_settings
from ...services.experiment_service import ERROR_EXIT_CODES, ExperimentService
from ...tasks import run_experiment


def fleet_arg(text):
    try:
        m, n = (int(part) for part in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected m,n but got {text!r}") from None
    if m < 0 or n < 0 or m + n == 0:
        raise argparse.ArgumentTypeError("fleet sizes must be non-negative and not both zero")
    return m, n


def parse_checkpoint(text, fleet, geography):
    """`m,n,geography=PATH`, or a bare PATH for the cell given by --fleet/--geography."""
    key, sep, path = text.rpartition("=")
    if sep and key.count(",") == 2:
        return key, path
    if fleet is None or geography is None:
        raise CommandError(
            "A bare --checkpoint needs --fleet and --geography; use m,n,geography=PATH",
            returncode=ERROR_EXIT_CODES["usage"],
        )
    return f"{fleet[0]},{fleet[1]},{geography}", text


class ExperimentCommand(BaseCommand):
    kind = None
    days_param = True

    def add_arguments(self, parser):
        parser.add_argument("--config", help="Experiment config file (KEY=value lines)")
        parser.add_argument("--seed", type=int, help="Random seed (defaults to the config SEED)")
        parser.add_argument("--out-dir", help="Directory for artifacts")
        parser.add_argument("--policy", action="append", help="Policy spec, e.g. pfa:tau=14")
        parser.add_argument(
            "--checkpoint", action="append", help="Network bank, PATH or m,n,geography=PATH"
        )
        parser.add_argument("--fleet", type=fleet_arg, help="Fleet size as m,n")
        parser.add_argument("--geography", choices=["homogeneous", "heterogeneous"])
        parser.add_argument("--days", type=int, help="Number of simulated days")
        parser.add_argument("--steps", type=int, help="Training steps")
        parser.add_argument(
            "--queue", action="store_true", help="Queue the run on Celery instead of running it"
        )

    def build_params(self, options):
        """Command-specific params; the base handles config and shared overrides."""
        return {}

    def shared_overrides(self, options):
        overrides = {}
        if options["fleet"] is not None:
            overrides["fleet_m"], overrides["fleet_n"] = options["fleet"]
        if options["geography"]:
            overrides["geography"] = options["geography"]
        if options["steps"] is not None:
            overrides["total_steps"] = options["steps"]
        return overrides

    def resolve_seed(self, config, seed):
        if seed is not None:
            return seed
        try:
            return load_settings(config).seed
        except ConfigError as exc:
            raise CommandError(str(exc), returncode=ERROR_EXIT_CODES["infeasible_config"])
        except OSError as exc:
            raise CommandError(str(exc), returncode=ERROR_EXIT_CODES["io"])

    def handle(self, *args, **options):
        config = options["config"] or settings.SDD_CONFIG_PATH or None
        params = {"config": config, "overrides": self.shared_overrides(options)}
        params.update(self.build_params(options))
        if self.days_param and options["days"] is not None:
            params.setdefault("days", options["days"])

        seed = self.resolve_seed(config, options["seed"])
        run = ExperimentService.create_run(self.kind, params, seed, options["out_dir"])

        if options["queue"]:
            run.mark_as_queued()
            run_experiment.delay(run.id)
            self.stdout.write(self.style.SUCCESS(f"Queued {self.kind} run {run.id}"))
            return

        result = ExperimentService.execute(run.id)
        self.stdout.write(json.dumps(result.to_dict(), indent=2, default=str))
        if result.exit_code:
            raise CommandError(result.data.get("message", "Run failed"), returncode=result.exit_code)
        self.stdout.write(self.style.SUCCESS(f"{self.kind} run {run.id} written to {run.out_dir}"))
