"""
Dispatch policies. Every policy maps (State, FeasibilityPair) to an Action.
"""

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np
from pydantic import BaseModel, ConfigDict

from ..exceptions import MissingCheckpointError, PolicySpecError
from .features import extract
from .simulator import Action, Alpha, FeasibilityPair, State, run_episode
from .trainer import NETWORK_ACTIONS, NetworkBank, NetworkId, choose_action, load_bank
from .world import DEPOT, InstanceConfig, SamplePath, vehicle_travel_time

logger = logging.getLogger(__name__)

TAU_GRID = tuple(float(v) for v in range(0, 61))
DELTA_GRID = tuple(float(v) for v in range(0, 121))


class Policy(ABC):
    name = "policy"

    def __call__(self, state: State, feasibility: FeasibilityPair) -> Action:
        if feasibility.both_infeasible:
            return Action.deny()
        return Action.build(self.choose(state, feasibility), feasibility)

    @abstractmethod
    def choose(self, state: State, feasibility: FeasibilityPair) -> Alpha:
        """Pick a fleet (or denial) for a request that at least one fleet can serve."""


class _ThresholdPolicy(Policy):
    def __init__(self, tau: float, cfg: InstanceConfig):
        if tau < 0:
            raise ValueError("tau must be non-negative")
        self.tau = tau
        self.cfg = cfg

    def designated(self, state: State) -> Alpha:
        distance = vehicle_travel_time(DEPOT, state.request.location, self.cfg.travel)
        return Alpha.VEHICLE if distance <= self.tau else Alpha.DRONE


class PFAPolicy(_ThresholdPolicy):
    """Close customers by vehicle, far ones by drone; feasible requests are always served."""

    name = "pfa"

    def choose(self, state, feasibility):
        if not feasibility.drone_feasible:
            return Alpha.VEHICLE
        if not feasibility.vehicle_feasible:
            return Alpha.DRONE
        return self.designated(state)


class PFARejectPolicy(_ThresholdPolicy):
    """Like PFA, but denies when the designated fleet cannot serve."""

    name = "pfa_rej"

    def choose(self, state, feasibility):
        fleet = self.designated(state)
        return fleet if fleet in feasibility.feasible_alphas() else Alpha.NO_SERVICE


class DeltaPolicy(Policy):
    name = "delta"

    def __init__(self, delta: float):
        if delta < 0:
            raise ValueError("delta must be non-negative")
        self.delta = delta

    def choose(self, state, feasibility):
        if feasibility.vehicle is not None and feasibility.vehicle.delta < self.delta:
            return Alpha.VEHICLE
        if feasibility.drone_feasible:
            return Alpha.DRONE
        return Alpha.NO_SERVICE


class QPolicy(Policy):
    """Greedy over the network bank; may deny feasible requests."""

    name = "q"

    def __init__(self, bank: NetworkBank, cfg: InstanceConfig):
        bank.check_compatible(cfg, self.name)
        self.bank = bank
        self.cfg = cfg

    def choose(self, state, feasibility):
        features = extract(state, feasibility, self.bank.feature_spec, self.cfg)
        return choose_action(self.bank, features, feasibility, 0.0, None).alpha


class QNoRejectPolicy(QPolicy):
    """Single fleet-choice network queried only when both fleets are feasible."""

    name = "q_no_rej"

    def choose(self, state, feasibility):
        if not (feasibility.vehicle_feasible and feasibility.drone_feasible):
            return feasibility.feasible_alphas()[0]
        features = extract(state, feasibility, self.bank.feature_spec, self.cfg)
        q = self.bank.q_values(NetworkId.NO_REJECT, features.normalized)
        return NETWORK_ACTIONS[NetworkId.NO_REJECT][int(np.argmax(q))]


class RandomPolicy(Policy):
    """Uniform over the feasible fleets and denial."""

    name = "random"

    def __init__(self, seed: int = 0):
        self.rng = np.random.default_rng(seed)

    def choose(self, state, feasibility):
        options = feasibility.feasible_alphas() + [Alpha.NO_SERVICE]
        return options[int(self.rng.integers(len(options)))]


class GreedyVehicleFirstPolicy(Policy):
    name = "greedy"

    def choose(self, state, feasibility):
        return feasibility.feasible_alphas()[0]


class PolicySpec(BaseModel):
    """A parsed `kind:key=value,...` policy string."""

    model_config = ConfigDict(frozen=True)

    kind: str
    params: dict[str, str] = {}

    @property
    def label(self) -> str:
        shown = {k: v for k, v in self.params.items() if k != "checkpoint"}
        if not shown:
            return self.kind
        return self.kind + "_" + "_".join(f"{k}{v}" for k, v in sorted(shown.items()))


POLICY_KINDS = ("pfa", "pfa_rej", "delta", "q", "q_no_rej", "random", "greedy")
DEFAULT_POLICY_PARAMS = {"pfa": {"tau": "14"}, "pfa_rej": {"tau": "13"}, "delta": {"delta": "35"}}


def parse_policy_spec(text: str) -> PolicySpec:
    kind, _, rest = text.strip().partition(":")
    if kind not in POLICY_KINDS:
        raise PolicySpecError(f"Unknown policy {kind!r}; choose from {', '.join(POLICY_KINDS)}")
    params = dict(DEFAULT_POLICY_PARAMS.get(kind, {}))
    for item in filter(None, rest.split(",")):
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise PolicySpecError(f"Malformed policy parameter {item!r} in {text!r}")
        params[key.strip()] = value.strip()
    return PolicySpec(kind=kind, params=params)


def _number(spec: PolicySpec, key: str) -> float:
    try:
        value = float(spec.params[key])
    except (KeyError, ValueError):
        raise PolicySpecError(f"Policy {spec.kind} needs a numeric {key}") from None
    if math.isnan(value) or value < 0:
        raise PolicySpecError(f"Policy {spec.kind}: {key} must be non-negative")
    return value


def build_policy(spec: PolicySpec, cfg: InstanceConfig, bank: NetworkBank | None = None) -> Policy:
    """Instantiate a policy; learned kinds load their checkpoint unless a bank is given."""
    if spec.kind == "pfa":
        return PFAPolicy(_number(spec, "tau"), cfg)
    if spec.kind == "pfa_rej":
        return PFARejectPolicy(_number(spec, "tau"), cfg)
    if spec.kind == "delta":
        return DeltaPolicy(_number(spec, "delta"))
    if spec.kind == "random":
        return RandomPolicy(int(_number(spec, "seed")) if "seed" in spec.params else 0)
    if spec.kind == "greedy":
        return GreedyVehicleFirstPolicy()

    if bank is None:
        checkpoint = spec.params.get("checkpoint")
        if not checkpoint:
            raise MissingCheckpointError(f"Policy {spec.kind} needs checkpoint=PATH")
        bank = load_bank(checkpoint)
    if spec.kind == "q_no_rej":
        return QNoRejectPolicy(bank, cfg)
    return QPolicy(bank, cfg)


@dataclass(frozen=True)
class TuningResult:
    best: float
    scores: dict[float, float]


def tune_threshold_by_enumeration(
    make_policy: Callable[[float], Policy],
    grid: Iterable[float],
    paths: list[SamplePath],
    cfg: InstanceConfig,
) -> TuningResult:
    """Mean served per grid value; the lowest value wins ties."""
    grid = sorted(set(grid))
    if not grid:
        raise ValueError("Threshold grid is empty")
    if not paths:
        raise ValueError("Tuning needs at least one sample path")

    scores = {}
    best, best_score = None, -math.inf
    for value in grid:
        policy = make_policy(value)
        score = float(np.mean([run_episode(policy, path, cfg).served for path in paths]))
        scores[value] = score
        if score > best_score:
            best, best_score = value, score
    logger.info(f"Tuned threshold {best} (mean served {best_score:.2f}) over {len(grid)} values")
    return TuningResult(best, scores)
