"""
Evaluation metrics, paired significance tests and the fleet x geography x
policy evaluation matrix with its CSV artifacts.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Mapping, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field
from scipy import stats

from ..exceptions import MissingCheckpointError
from .policies import build_policy, parse_policy_spec
from .simulator import EpisodeResult, run_episode, write_decision_log
from .world import (
    HomogeneousGeography,
    InstanceConfig,
    gen_sample_paths,
    heterogeneous_geography,
)

logger = logging.getLogger(__name__)

SIGNIFICANCE_LEVEL = 0.01
REPORT_COLUMNS = [
    "fleet_m",
    "fleet_n",
    "geography",
    "policy",
    "days",
    "mean_served",
    "quality",
    "improvement_pct",
    "t_stat",
    "p_value",
    "significant",
]
FEASIBILITY_COLUMNS = ["t_min", "veh_infeasible", "drone_infeasible"]

GeographyName = Literal["homogeneous", "heterogeneous"]


def solution_quality(results: Sequence[EpisodeResult]) -> float:
    """Served requests over all requests across the evaluation days."""
    return _quality([r.served for r in results], [r.requests for r in results])


def _quality(served: Sequence[int], requests: Sequence[int]) -> float:
    total = sum(requests)
    if total == 0:
        raise ValueError("Solution quality is undefined without requests")
    return sum(served) / total


def improvement(quality_a: float, quality_b: float) -> float:
    """Relative improvement of a over b, in percent."""
    if quality_b == 0:
        raise ZeroDivisionError("Baseline quality is zero")
    return (quality_a - quality_b) / quality_b * 100.0


@dataclass(frozen=True)
class TTestResult:
    statistic: float
    p_value: float
    n: int
    degenerate: bool = False


def paired_t_test(pairs: Sequence[tuple[float, float]]) -> TTestResult:
    """
    Two-sided paired t-test on per-day differences a - b.

    With zero variance the test is degenerate: p = 1 for a zero mean
    difference, otherwise p = 0 and t is infinite with the mean's sign.
    """
    if len(pairs) < 2:
        raise ValueError("A paired t-test needs at least two pairs")
    a = np.array([pair[0] for pair in pairs], dtype=np.float64)
    b = np.array([pair[1] for pair in pairs], dtype=np.float64)
    diffs = a - b
    if np.all(diffs == diffs[0]):
        mean = float(diffs[0])
        if mean == 0:
            return TTestResult(0.0, 1.0, len(pairs), degenerate=True)
        return TTestResult(math.copysign(math.inf, mean), 0.0, len(pairs), degenerate=True)
    result = stats.ttest_rel(a, b)
    return TTestResult(float(result.statistic), float(result.pvalue), len(pairs))


class RunMatrixSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    fleets: list[tuple[int, int]] = Field(min_length=1)
    geographies: list[GeographyName] = Field(min_length=1)
    eval_days: int = Field(500, ge=1)
    policies: list[str] = Field(min_length=1)
    seed: int = 100_000
    sigma_km: float | None = Field(None, gt=0)


@dataclass
class CellOutcome:
    """Per-day results of one policy in one matrix cell."""

    fleet_m: int
    fleet_n: int
    geography: str
    policy: str
    served: list[int]
    requests: list[int]
    first_day: EpisodeResult | None = field(default=None, repr=False)

    @property
    def cell(self) -> tuple[int, int, str]:
        return (self.fleet_m, self.fleet_n, self.geography)

    @property
    def slug(self) -> str:
        return f"{self.fleet_m}x{self.fleet_n}_{self.geography}_{self.policy}"


@dataclass
class EvalReport:
    rows: list[dict]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=REPORT_COLUMNS)

    def write(self, target: str | Path) -> Path:
        target = Path(target)
        target.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(target, index=False)
        return target


def build_report(outcomes: Sequence[CellOutcome]) -> EvalReport:
    """
    Reduce per-day outcomes to report rows.

    The first policy seen in each cell is that cell's baseline for the
    improvement and paired t-test columns.
    """
    baselines: dict[tuple, CellOutcome] = {}
    rows = []
    for outcome in outcomes:
        baseline = baselines.setdefault(outcome.cell, outcome)
        quality = _quality(outcome.served, outcome.requests)
        row = {
            "fleet_m": outcome.fleet_m,
            "fleet_n": outcome.fleet_n,
            "geography": outcome.geography,
            "policy": outcome.policy,
            "days": len(outcome.served),
            "mean_served": float(np.mean(outcome.served)),
            "quality": quality,
            "improvement_pct": None,
            "t_stat": None,
            "p_value": None,
            "significant": False,
        }
        if baseline is not outcome:
            row["improvement_pct"] = improvement(
                quality, _quality(baseline.served, baseline.requests)
            )
            if len(outcome.served) >= 2:
                test = paired_t_test(list(zip(outcome.served, baseline.served)))
                row["t_stat"] = test.statistic
                row["p_value"] = test.p_value
                row["significant"] = test.p_value < SIGNIFICANCE_LEVEL
        rows.append(row)
    return EvalReport(rows)


def cell_config(
    cfg: InstanceConfig,
    fleet_m: int,
    fleet_n: int,
    geography: GeographyName,
    sigma_km: float | None = None,
) -> InstanceConfig:
    """
    The instance of one matrix cell.

    A homogeneous cell spreads customers with `sigma_km`, else with the base
    config's spread when that is homogeneous, else with the default 3 km.
    """
    if geography == "heterogeneous":
        shape = heterogeneous_geography(cfg.order_window_end)
    elif sigma_km is not None:
        shape = HomogeneousGeography(sigma_km=sigma_km)
    elif isinstance(cfg.geography, HomogeneousGeography):
        shape = cfg.geography
    else:
        shape = HomogeneousGeography()
    return InstanceConfig(**{**dict(cfg), "fleet_m": fleet_m, "fleet_n": fleet_n, "geography": shape})


def feasibility_frame(result: EpisodeResult) -> pd.DataFrame:
    return pd.DataFrame(
        [
            (record.time, int(not record.vehicle_feasible), int(not record.drone_feasible))
            for record in result.decision_log
        ],
        columns=FEASIBILITY_COLUMNS,
    )


def run_matrix(
    spec: RunMatrixSpec,
    cfg: InstanceConfig,
    checkpoints: Mapping[tuple[int, int, str], str] | None = None,
    out_dir: str | Path | None = None,
    audit: bool = False,
) -> tuple[EvalReport, list[CellOutcome]]:
    """
    Evaluate every (fleet, geography, policy) cell.

    All policies of a cell run on the same seeded evaluation days so the
    paired t-test is valid. Learned policies take their checkpoint from
    `checkpoints` keyed by (m, n, geography), else from the policy string.
    """
    checkpoints = checkpoints or {}
    policy_specs = [parse_policy_spec(text) for text in spec.policies]
    outcomes = []

    for fleet_m, fleet_n in spec.fleets:
        for geography in spec.geographies:
            cell_cfg = cell_config(cfg, fleet_m, fleet_n, geography, spec.sigma_km)
            paths = gen_sample_paths(cell_cfg, spec.eval_days, spec.seed)
            for policy_spec in policy_specs:
                if policy_spec.kind in ("q", "q_no_rej"):
                    checkpoint = checkpoints.get((fleet_m, fleet_n, geography))
                    checkpoint = checkpoint or policy_spec.params.get("checkpoint")
                    if not checkpoint:
                        raise MissingCheckpointError(
                            f"No checkpoint for {policy_spec.kind} on "
                            f"({fleet_m}, {fleet_n}) {geography}"
                        )
                    policy_spec = policy_spec.model_copy(
                        update={"params": {**policy_spec.params, "checkpoint": str(checkpoint)}}
                    )
                policy = build_policy(policy_spec, cell_cfg)
                results = [run_episode(policy, path, cell_cfg, audit) for path in paths]
                outcome = CellOutcome(
                    fleet_m,
                    fleet_n,
                    geography,
                    policy_spec.label,
                    [r.served for r in results],
                    [r.requests for r in results],
                    results[0],
                )
                outcomes.append(outcome)
                logger.info(
                    f"Cell ({fleet_m}, {fleet_n}) {geography} {outcome.policy}: "
                    f"mean served {np.mean(outcome.served):.1f}"
                )

    report = build_report(outcomes)
    if out_dir is not None:
        write_artifacts(report, outcomes, out_dir)
    return report, outcomes


def write_artifacts(report: EvalReport, outcomes: Sequence[CellOutcome], out_dir: str | Path) -> Path:
    out_dir = Path(out_dir)
    report.write(out_dir / "report.csv")
    for outcome in outcomes:
        if outcome.first_day is None:
            continue
        write_decision_log(outcome.first_day, out_dir / f"decisions_{outcome.slug}.csv")
        feasibility_frame(outcome.first_day).to_csv(
            out_dir / f"feasibility_{outcome.slug}.csv", index=False
        )
    return out_dir / "report.csv"
