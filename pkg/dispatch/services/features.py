"""
State features fed to the Q-networks, with min-max normalization.
"""

import math
from dataclasses import dataclass
from enum import StrEnum
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict

from .routing import INFEASIBLE_DELTA
from .simulator import FeasibilityPair, State
from .world import DEPOT, InstanceConfig, drone_travel_time, vehicle_travel_time

# radius holding 99.9% of an isotropic normal: sqrt(-2 ln 0.001)
RADIUS_999_PER_SIGMA = math.sqrt(-2.0 * math.log(0.001))


class FeatureSet(StrEnum):
    FULL = "full"
    LOCAL = "local"
    ACTION_ONLY = "action_only"
    POST_DECISION = "post_decision"
    DISTANCE_ONLY = "distance_only"


class FeatureSetSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    variant: FeatureSet = FeatureSet.FULL
    distance_basis: Literal["drone", "vehicle"] = "drone"


@dataclass(frozen=True)
class FeatureVector:
    raw: np.ndarray
    normalized: np.ndarray


def feature_dim(spec: FeatureSetSpec, cfg: InstanceConfig) -> int:
    m, n = cfg.fleet_m, cfg.fleet_n
    return {
        FeatureSet.FULL: 3 + m + n,
        FeatureSet.LOCAL: 5,
        FeatureSet.ACTION_ONLY: 3,
        FeatureSet.DISTANCE_ONLY: 2,
        FeatureSet.POST_DECISION: 3 * (1 + m + n),
    }[spec.variant]


def distance_cap(cfg: InstanceConfig, spec: FeatureSetSpec) -> float:
    """Travel time to the 99.9th-percentile depot distance."""
    radius = RADIUS_999_PER_SIGMA * cfg.geography.max_sigma
    if cfg.max_distance_km is not None:
        radius = min(radius, cfg.max_distance_km)
    if spec.distance_basis == "vehicle":
        return radius * cfg.travel.street_factor * 60.0 / cfg.travel.vehicle_speed_kmh
    return radius * 60.0 / cfg.travel.drone_speed_kmh


def normalization_bounds(cfg: InstanceConfig, spec: FeatureSetSpec) -> tuple[np.ndarray, np.ndarray]:
    """Times and availabilities span the drone shift; later values clamp to 1."""
    dim = feature_dim(spec, cfg)
    lo = np.zeros(dim)
    hi = np.full(dim, cfg.t_d_max)
    if spec.variant != FeatureSet.POST_DECISION:
        hi[1] = distance_cap(cfg, spec)
        if spec.variant != FeatureSet.DISTANCE_ONLY:
            hi[2] = INFEASIBLE_DELTA
    return lo, hi


def _customer_distance(state: State, cfg: InstanceConfig, spec: FeatureSetSpec) -> float:
    if spec.distance_basis == "vehicle":
        return vehicle_travel_time(DEPOT, state.request.location, cfg.travel)
    return drone_travel_time(DEPOT, state.request.location, cfg.travel)


def _earliest(plans, now: float) -> float:
    if not plans:
        return now
    return min(plan.availability for plan in plans)


def _raw_features(state, feasibility, spec, cfg) -> list[float]:
    plans = state.plans
    t = state.time

    if spec.variant == FeatureSet.POST_DECISION:
        def completions(vehicle_plans, drone_plans):
            return [t] + [p.completion for p in vehicle_plans] + [p.completion for p in drone_plans]

        no_service = completions(plans.vehicle_plans, plans.drone_plans)
        vehicle = no_service
        drone = no_service
        if feasibility.vehicle is not None:
            vehicle = completions(feasibility.vehicle.vehicle_plans, plans.drone_plans)
        if feasibility.drone is not None:
            drone = completions(plans.vehicle_plans, feasibility.drone.drone_plans)
        return vehicle + drone + no_service

    delta = INFEASIBLE_DELTA if feasibility.vehicle is None else feasibility.vehicle.delta
    head = [t, _customer_distance(state, cfg, spec), delta]

    if spec.variant == FeatureSet.FULL:
        return (
            head
            + [plan.availability for plan in plans.vehicle_plans]
            + [plan.availability for plan in plans.drone_plans]
        )
    if spec.variant == FeatureSet.LOCAL:
        if feasibility.vehicle is not None:
            vehicle = plans.vehicle_plans[feasibility.vehicle.vehicle_index].availability
        else:
            vehicle = _earliest(plans.vehicle_plans, t)
        if feasibility.drone is not None:
            drone = plans.drone_plans[feasibility.drone.drone_index].availability
        else:
            drone = _earliest(plans.drone_plans, t)
        return head + [vehicle, drone]
    if spec.variant == FeatureSet.ACTION_ONLY:
        return head
    return head[:2]


def extract(
    state: State, feasibility: FeasibilityPair, spec: FeatureSetSpec, cfg: InstanceConfig
) -> FeatureVector:
    raw = np.asarray(_raw_features(state, feasibility, spec, cfg), dtype=np.float64)
    lo, hi = normalization_bounds(cfg, spec)
    normalized = np.clip((raw - lo) / (hi - lo), 0.0, 1.0)
    return FeatureVector(raw=raw, normalized=normalized)
