"""
Business logic for executing tracked experiment runs.
"""

import hashlib
import logging
import math
import traceback
from pathlib import Path

import pandas as pd
from django.conf import settings
from django.db import transaction

from ..exceptions import (
    CheckpointError,
    CheckpointMismatchError,
    ConfigError,
    InfeasibleParamsError,
    MissingCheckpointError,
    PathFileError,
    PolicySpecError,
)
from ..models import CellResult, ExperimentRun
from .analytics import b_star, emit_curves, figure_grid, oracle_frame
from .config import load_settings
from .experiments import CellOutcome, build_report, run_matrix, write_artifacts
from .policies import DeltaPolicy, PFAPolicy, PFARejectPolicy, tune_threshold_by_enumeration
from .trainer import learning_curve_frame, save_bank, training_run
from .world import gen_sample_paths, load_paths, save_paths

logger = logging.getLogger(__name__)

EVAL_SEED_OFFSET = 1_000_000
ERROR_EXIT_CODES = {"usage": 1, "infeasible_config": 2, "io": 3, "internal": 1}

TUNABLE = {
    "pfa": ("tau_grid", lambda cfg: lambda v: PFAPolicy(v, cfg)),
    "pfa_rej": ("tau_grid", lambda cfg: lambda v: PFARejectPolicy(v, cfg)),
    "delta": ("delta_grid", lambda cfg: lambda v: DeltaPolicy(v)),
}


class ExperimentResult:
    """Result object for experiment executions."""

    def __init__(self, status, **kwargs):
        self.status = status
        self.data = kwargs

    @property
    def exit_code(self):
        if self.status == "completed":
            return 0
        return ERROR_EXIT_CODES.get(self.data.get("error_code"), 1)

    def to_dict(self):
        return {"status": self.status, **self.data}


def classify_error(exc):
    """Map a failure to the usage / infeasible_config / io error codes."""
    if isinstance(exc, (PolicySpecError, MissingCheckpointError)):
        return "usage"
    if isinstance(exc, (ConfigError, CheckpointMismatchError, InfeasibleParamsError)):
        return "infeasible_config"
    if isinstance(exc, (OSError, PathFileError, CheckpointError)):
        return "io"
    return "internal"


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class ExperimentService:
    """Service running gen/tune/train/eval/analyze/curves for an ExperimentRun."""

    @staticmethod
    def create_run(kind, params, seed=0, out_dir=None):
        """Register a pending run; out_dir defaults to a per-run artifacts folder."""
        run = ExperimentRun.objects.create(kind=kind, params=params, seed=seed)
        run.out_dir = str(out_dir or Path(settings.SDD_ARTIFACTS_DIR) / f"{kind}-{run.pk}")
        run.save(update_fields=["out_dir", "updated_at"])
        return run

    @staticmethod
    def execute(run_id):
        """
        Execute an experiment run.

        Args:
            run_id: ID of the ExperimentRun to execute

        Returns:
            ExperimentResult: Result of the execution
        """
        run = ExperimentService._get_run(run_id)
        if not run:
            return ExperimentResult("error", error_code="usage", message="Run not found")

        if run.status == ExperimentRun.Status.COMPLETED:
            return ExperimentResult("skipped", message="Already completed", **run.result)

        run.mark_as_running()
        logger.info(f"Starting {run.kind} run {run.pk} (seed {run.seed})")
        handler = getattr(ExperimentService, f"_run_{run.kind}")

        try:
            result = handler(run)
        except Exception as exc:
            return ExperimentService._handle_failure(run, exc)

        run.mark_as_completed(result)
        logger.info(f"Completed {run.kind} run {run.pk}")
        return ExperimentResult("completed", run_id=run.pk, **result)

    @staticmethod
    def _get_run(run_id):
        try:
            return ExperimentRun.objects.get(id=run_id)
        except ExperimentRun.DoesNotExist:
            logger.error(f"Experiment run {run_id} not found")
            return None

    @staticmethod
    def _handle_failure(run, exc):
        error_code = classify_error(exc)
        if error_code == "internal":
            logger.error(f"Run {run.pk} crashed: {traceback.format_exc()}")
        else:
            logger.warning(f"Run {run.pk} failed ({error_code}): {exc}")
        run.mark_as_failed(error_code, str(exc))
        return ExperimentResult("failed", run_id=run.pk, error_code=error_code, message=str(exc))

    @staticmethod
    def _settings(run):
        params = run.params
        config_path = params.get("config") or settings.SDD_CONFIG_PATH or None
        return load_settings(config_path, **params.get("overrides", {}))

    @staticmethod
    def _run_gen(run):
        experiment = ExperimentService._settings(run)
        cfg = experiment.instance_config()
        days = run.params.get("days") or experiment.train_paths
        paths = gen_sample_paths(cfg, days, run.seed)
        target = save_paths(paths, Path(run.out_dir) / "paths.txt", cfg)
        return {
            "paths": len(paths),
            "requests": sum(len(path) for path in paths),
            "file": str(target),
            "sha256": _sha256(target),
        }

    @staticmethod
    def _training_paths(run, experiment, cfg):
        paths_file = run.params.get("paths")
        if paths_file:
            path_set = load_paths(paths_file)
            if path_set.config.config_ref != cfg.config_ref:
                raise ConfigError(f"{paths_file} was generated for another configuration")
            return path_set.paths
        days = run.params.get("days") or experiment.train_paths
        return gen_sample_paths(cfg, days, run.seed)

    @staticmethod
    def _run_tune(run):
        experiment = ExperimentService._settings(run)
        cfg = experiment.instance_config()
        family = run.params.get("family", "pfa")
        if family not in TUNABLE:
            raise PolicySpecError(f"Cannot tune {family!r}; choose from {', '.join(TUNABLE)}")
        grid_key, factory = TUNABLE[family]

        days = run.params.get("days") or experiment.tune_days
        paths = gen_sample_paths(cfg, days, run.seed)
        tuning = tune_threshold_by_enumeration(factory(cfg), getattr(experiment, grid_key), paths, cfg)

        target = Path(run.out_dir) / "tuning.csv"
        target.parent.mkdir(parents=True, exist_ok=True)
        pd.DataFrame(
            sorted(tuning.scores.items()), columns=["threshold", "mean_served"]
        ).to_csv(target, index=False)
        return {"family": family, "best": tuning.best, "file": str(target)}

    @staticmethod
    def _run_train(run):
        experiment = ExperimentService._settings(run)
        cfg = experiment.instance_config()
        schedule = experiment.training_schedule()
        paths = ExperimentService._training_paths(run, experiment, cfg)
        eval_paths = gen_sample_paths(cfg, schedule.eval_paths, run.seed + EVAL_SEED_OFFSET)

        outcome = training_run(
            cfg, paths, schedule, run.seed, eval_paths, experiment.feature_spec()
        )
        out_dir = Path(run.out_dir)
        checkpoint = save_bank(outcome.best_bank, out_dir / "bank.sdqb")
        save_bank(outcome.bank, out_dir / "bank_final.sdqb")
        learning_curve_frame(outcome.curve).to_csv(out_dir / "learning_curve.csv", index=False)
        return {
            "checkpoint": str(checkpoint),
            "steps": schedule.total_steps,
            "best_eval": outcome.best_eval,
            "curve_points": len(outcome.curve),
        }

    @staticmethod
    def _run_eval(run):
        experiment = ExperimentService._settings(run)
        cfg = experiment.instance_config()
        spec = experiment.run_matrix_spec()
        checkpoints = {}
        for key, path in run.params.get("checkpoints", {}).items():
            m, n, geography = key.split(",")
            checkpoints[(int(m), int(n), geography)] = path

        report, outcomes = run_matrix(
            spec, cfg, checkpoints, run.out_dir, audit=settings.SDD_AUDIT_PLANS
        )
        with transaction.atomic():
            CellResult.objects.bulk_create(
                CellResult(
                    run=run,
                    position=index,
                    fleet_m=outcome.fleet_m,
                    fleet_n=outcome.fleet_n,
                    geography=outcome.geography,
                    policy=outcome.policy,
                    served=outcome.served,
                    requests=outcome.requests,
                )
                for index, outcome in enumerate(outcomes)
            )
        return {"report": str(Path(run.out_dir) / "report.csv"), "cells": len(outcomes)}

    @staticmethod
    def _run_analyze(run):
        experiment = ExperimentService._settings(run)
        base = experiment.analytic_params()
        thresholds = {}
        for t_prime in experiment.t_primes:
            value = b_star(base.at(t_prime=t_prime))
            thresholds[str(t_prime)] = "always_accept" if math.isinf(value) else value

        result = {"b_star": thresholds}
        trials = run.params.get("trials", experiment.mc_trials)
        if trials:
            grid = figure_grid(base, experiment.t_primes, experiment.b_primes)
            frame = oracle_frame(grid, trials, run.seed)
            target = Path(run.out_dir) / "oracle.csv"
            target.parent.mkdir(parents=True, exist_ok=True)
            frame.to_csv(target, index=False)
            result["oracle"] = str(target)
            result["agreement"] = {
                scenario: float(group["agrees"].mean())
                for scenario, group in frame.groupby("scenario")
            }
        return result

    @staticmethod
    def _run_curves(run):
        experiment = ExperimentService._settings(run)
        grid = figure_grid(experiment.analytic_params(), experiment.t_primes, experiment.b_primes)
        target = emit_curves(grid, Path(run.out_dir) / "curves.csv")
        return {"file": str(target), "rows": len(grid)}

    @staticmethod
    def report_for(run):
        """Rebuild the evaluation report from persisted cell rows."""
        outcomes = [
            CellOutcome(
                cell.fleet_m,
                cell.fleet_n,
                cell.geography,
                cell.policy,
                list(cell.served),
                list(cell.requests),
            )
            for cell in run.cells.order_by("position")
        ]
        return build_report(outcomes)

    @staticmethod
    def rewrite_report(run, out_dir=None):
        report = ExperimentService.report_for(run)
        return write_artifacts(report, [], out_dir or run.out_dir)
