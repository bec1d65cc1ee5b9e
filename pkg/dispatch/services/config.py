"""
Experiment configuration files.

A config file holds KEY=value lines (``#`` comments, keys case-insensitive)
and is read with python-dotenv. One file drives every command: instance
constants, training schedule, feature set, evaluation matrix, tuning grids
and analytic parameters. Command-line flags override file values.
"""

import logging
from pathlib import Path
from typing import Literal

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, ValidationError, field_validator

from ..exceptions import ConfigError
from .analytics import AnalyticParams
from .experiments import RunMatrixSpec
from .features import FeatureSet, FeatureSetSpec
from .trainer import TrainingSchedule
from .world import (
    HomogeneousGeography,
    InstanceConfig,
    TravelModel,
    heterogeneous_geography,
)

logger = logging.getLogger(__name__)


def parse_range(text: str) -> list[float]:
    """`lo:hi:step` (inclusive) or a comma-separated list."""
    text = text.strip()
    if ":" in text:
        lo, hi, step = (float(part) for part in text.split(":"))
        if step <= 0:
            raise ValueError("range step must be positive")
        count = int(round((hi - lo) / step)) + 1
        return [round(lo + i * step, 10) for i in range(max(count, 0))]
    return [float(part) for part in text.split(",") if part.strip()]


class ExperimentSettings(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    # instance
    order_window_end: float = 420.0
    t_v_max: float = 480.0
    t_d_max: float = 720.0
    deadline_len: float = 240.0
    vehicle_load: float = 3.0
    drone_load: float = 3.0
    vehicle_service: float = 3.0
    drone_service: float = 3.0
    charge_time: float = 20.0
    expected_requests: float = 500.0
    fleet_m: int = 3
    fleet_n: int = 10
    geography: Literal["homogeneous", "heterogeneous"] = "homogeneous"
    sigma_km: float = 3.0
    vehicle_speed_kmh: float = 30.0
    drone_speed_kmh: float = 40.0
    street_factor: float = 1.5
    drone_round_up: bool = False
    vehicle_metric: Literal["euclidean", "manhattan"] = "euclidean"
    max_distance_km: float | None = None
    seed: int = 0

    # training
    total_steps: int = 400_000
    train_paths: int = 500
    minibatch: int = 5000
    buffer_capacity: int = 50_000
    eps_start: float = 1.0
    eps_end: float = 0.01
    eps_decay_fraction: float = 0.8
    eval_interval: int = 100
    eval_paths: int = 50
    lr_initial: float = 0.01
    lr_base: float = 0.96
    lr_decay_steps: float = 6000
    hidden_layers: int = 2
    hidden_nodes: int | None = None
    replay: bool = True
    mode: Literal["q", "q_no_rej"] = "q"

    # features
    feature_set: FeatureSet = FeatureSet.FULL
    distance_basis: Literal["drone", "vehicle"] = "drone"

    # evaluation
    eval_days: int = 500
    eval_seed: int = 100_000
    fleets: list[tuple[int, int]] = [(2, 5), (2, 10), (2, 15), (3, 5), (3, 10), (3, 15), (4, 5), (4, 10), (4, 15)]
    geographies: list[Literal["homogeneous", "heterogeneous"]] = ["homogeneous", "heterogeneous"]
    policies: list[str] = ["pfa:tau=14", "pfa_rej:tau=13", "delta:delta=35"]

    # tuning
    tune_days: int = 50
    tau_grid: list[float] = [float(v) for v in range(0, 61)]
    delta_grid: list[float] = [float(v) for v in range(0, 121)]

    # analytics
    c: float = 1.5
    mu: float = 1.0
    d_max: float = 40.0
    analytic_horizon: float = 420.0
    t_primes: list[float] = [300.0, 410.0, 416.0]
    b_primes: list[float] = [float(v) for v in range(1, 41)]
    mc_trials: int = 200_000

    @field_validator("fleets", mode="before")
    @classmethod
    def parse_fleets(cls, value):
        if isinstance(value, str):
            fleets = []
            for item in filter(None, (part.strip() for part in value.split(";"))):
                m, n = item.split(",")
                fleets.append((int(m), int(n)))
            return fleets
        return value

    @field_validator("geographies", mode="before")
    @classmethod
    def parse_names(cls, value):
        if isinstance(value, str):
            return [part.strip() for part in value.split(",") if part.strip()]
        return value

    @field_validator("policies", mode="before")
    @classmethod
    def parse_policies(cls, value):
        if isinstance(value, str):
            return [part.strip() for part in value.split(";") if part.strip()]
        return value

    @field_validator("tau_grid", "delta_grid", "t_primes", "b_primes", mode="before")
    @classmethod
    def parse_grid(cls, value):
        if isinstance(value, str):
            return parse_range(value)
        return value

    def instance_config(self) -> InstanceConfig:
        if self.geography == "heterogeneous":
            geography = heterogeneous_geography(self.order_window_end)
        else:
            geography = HomogeneousGeography(sigma_km=self.sigma_km)
        return _validated(
            InstanceConfig,
            order_window_end=self.order_window_end,
            t_v_max=self.t_v_max,
            t_d_max=self.t_d_max,
            deadline_len=self.deadline_len,
            vehicle_load=self.vehicle_load,
            drone_load=self.drone_load,
            vehicle_service=self.vehicle_service,
            drone_service=self.drone_service,
            charge_time=self.charge_time,
            expected_requests=self.expected_requests,
            fleet_m=self.fleet_m,
            fleet_n=self.fleet_n,
            geography=geography,
            travel=_validated(
                TravelModel,
                vehicle_speed_kmh=self.vehicle_speed_kmh,
                drone_speed_kmh=self.drone_speed_kmh,
                street_factor=self.street_factor,
                drone_round_up=self.drone_round_up,
                vehicle_metric=self.vehicle_metric,
            ),
            seed=self.seed,
            max_distance_km=self.max_distance_km,
        )

    def training_schedule(self) -> TrainingSchedule:
        fields = set(TrainingSchedule.model_fields)
        return _validated(TrainingSchedule, **self.model_dump(include=fields))

    def feature_spec(self) -> FeatureSetSpec:
        return FeatureSetSpec(variant=self.feature_set, distance_basis=self.distance_basis)

    def run_matrix_spec(self) -> RunMatrixSpec:
        return _validated(
            RunMatrixSpec,
            fleets=self.fleets,
            geographies=self.geographies,
            eval_days=self.eval_days,
            policies=self.policies,
            seed=self.eval_seed,
            sigma_km=self.sigma_km,
        )

    def analytic_params(self) -> AnalyticParams:
        return _validated(
            AnalyticParams, c=self.c, mu=self.mu, d_max=self.d_max, horizon=self.analytic_horizon
        )


def _validated(model, **values):
    try:
        return model(**values)
    except ValidationError as exc:
        raise ConfigError(f"Invalid {model.__name__}: {exc}") from exc


def load_settings(path: str | Path | None = None, **overrides) -> ExperimentSettings:
    """
    Read a config file and apply non-None overrides.

    Missing files raise FileNotFoundError; invalid or unknown keys raise
    ConfigError.
    """
    values = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"Config file not found: {path}")
        values = {
            key.lower(): value
            for key, value in dotenv_values(path).items()
            if value is not None and value != ""
        }
        logger.debug(f"Loaded {len(values)} config keys from {path}")
    values.update({key: value for key, value in overrides.items() if value is not None})
    return _validated(ExperimentSettings, **values)
