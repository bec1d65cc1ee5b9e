"""
One simulated day as a sequential decision process.
"""

import logging
from dataclasses import dataclass, field, replace
from enum import IntEnum
from pathlib import Path
from typing import Callable, Mapping

import pandas as pd

from ..exceptions import InconsistentActionError, PlanInvariantError
from .routing import (
    DroneAssignment,
    FleetPlans,
    VehicleInsertion,
    advance_with_departures,
    best_vehicle_insertion,
    drone_fifo_assignment,
    validate_fleet_plans,
)
from .world import DEPOT, CustomerRequest, InstanceConfig, SamplePath, vehicle_travel_time

logger = logging.getLogger(__name__)

DECISION_LOG_COLUMNS = ["t_min", "dist_vehicle_min", "veh_feasible", "drone_feasible", "alpha"]


class Alpha(IntEnum):
    NO_SERVICE = 0
    VEHICLE = 1
    DRONE = 2


@dataclass(frozen=True, slots=True)
class State:
    time: float
    request: CustomerRequest
    plans: FleetPlans
    customers: Mapping[int, CustomerRequest]


@dataclass(frozen=True, slots=True)
class FeasibilityPair:
    vehicle: VehicleInsertion | None
    drone: DroneAssignment | None

    @property
    def vehicle_feasible(self) -> bool:
        return self.vehicle is not None

    @property
    def drone_feasible(self) -> bool:
        return self.drone is not None

    @property
    def both_infeasible(self) -> bool:
        return self.vehicle is None and self.drone is None

    def feasible_alphas(self) -> list[Alpha]:
        alphas = []
        if self.vehicle is not None:
            alphas.append(Alpha.VEHICLE)
        if self.drone is not None:
            alphas.append(Alpha.DRONE)
        return alphas


@dataclass(frozen=True, slots=True)
class Action:
    alpha: Alpha
    vehicle_plans: tuple | None = None
    drone_plans: tuple | None = None

    @classmethod
    def deny(cls) -> "Action":
        return cls(Alpha.NO_SERVICE)

    @classmethod
    def build(cls, alpha: Alpha, feasibility: FeasibilityPair) -> "Action":
        """Attach the updated plans of the chosen fleet."""
        if alpha == Alpha.VEHICLE:
            if feasibility.vehicle is None:
                raise InconsistentActionError("Vehicle chosen but no feasible insertion")
            return cls(alpha, vehicle_plans=feasibility.vehicle.vehicle_plans)
        if alpha == Alpha.DRONE:
            if feasibility.drone is None:
                raise InconsistentActionError("Drone chosen but no drone can serve")
            return cls(alpha, drone_plans=feasibility.drone.drone_plans)
        return cls.deny()


Policy = Callable[[State, FeasibilityPair], Action]


@dataclass(frozen=True, slots=True)
class DecisionRecord:
    time: float
    customer_id: int
    dist_vehicle_min: float
    vehicle_feasible: bool
    drone_feasible: bool
    alpha: Alpha
    forced: bool


@dataclass
class EpisodeResult:
    requests: int = 0
    served: int = 0
    forced_denials: int = 0
    policy_denials: int = 0
    decision_log: list[DecisionRecord] = field(default_factory=list)
    deliveries: dict[int, float] = field(default_factory=dict)

    @property
    def vehicle_served(self) -> int:
        return sum(1 for record in self.decision_log if record.alpha == Alpha.VEHICLE)

    @property
    def drone_served(self) -> int:
        return sum(1 for record in self.decision_log if record.alpha == Alpha.DRONE)


def feasibility_check(state: State, cfg: InstanceConfig) -> FeasibilityPair:
    return FeasibilityPair(
        vehicle=best_vehicle_insertion(
            state.plans, state.request, cfg, state.customers, state.time
        ),
        drone=drone_fifo_assignment(state.plans, state.request, cfg, state.time),
    )


def apply_action(state: State, action: Action, cfg: InstanceConfig) -> tuple[FleetPlans, int]:
    """Return the post-decision plans and the reward of the action."""
    plans = state.plans
    customer_id = state.request.id

    if action.alpha == Alpha.NO_SERVICE:
        return plans, 0
    if action.alpha == Alpha.VEHICLE:
        if action.vehicle_plans is None or len(action.vehicle_plans) != cfg.fleet_m:
            raise InconsistentActionError(f"Vehicle action without vehicle plans for {customer_id}")
        return (
            replace(
                plans,
                vehicle_plans=action.vehicle_plans,
                pending_vehicle=plans.pending_vehicle | {customer_id},
            ),
            1,
        )
    if action.drone_plans is None or len(action.drone_plans) != cfg.fleet_n:
        raise InconsistentActionError(f"Drone action without drone plans for {customer_id}")
    return (
        replace(
            plans,
            drone_plans=action.drone_plans,
            pending_drone=plans.pending_drone | {customer_id},
        ),
        1,
    )


def run_episode(
    policy: Policy, path: SamplePath, cfg: InstanceConfig, audit: bool = False
) -> EpisodeResult:
    """
    Simulate one day under `policy`.

    With `audit` set, every plan is re-validated after every decision and
    every realized arrival is checked against its deadline.
    """
    result = EpisodeResult()
    plans = FleetPlans.initial(cfg)
    customers: dict[int, CustomerRequest] = {}
    now = 0.0

    for request in sorted(path.requests, key=lambda r: (r.request_time, r.id)):
        plans, departed = advance_with_departures(plans, now, request.request_time)
        result.deliveries.update((stop.customer_id, stop.arrival) for stop in departed)
        now = request.request_time
        customers[request.id] = request

        state = State(now, request, plans, customers)
        feasibility = feasibility_check(state, cfg)
        action = policy(state, feasibility)
        plans, reward = apply_action(state, action, cfg)

        forced = feasibility.both_infeasible
        result.requests += 1
        result.served += reward
        if not reward:
            if forced:
                result.forced_denials += 1
            else:
                result.policy_denials += 1
        result.decision_log.append(
            DecisionRecord(
                time=now,
                customer_id=request.id,
                dist_vehicle_min=vehicle_travel_time(DEPOT, request.location, cfg.travel),
                vehicle_feasible=feasibility.vehicle_feasible,
                drone_feasible=feasibility.drone_feasible,
                alpha=action.alpha,
                forced=forced,
            )
        )

        if audit and not validate_fleet_plans(plans, cfg, customers):
            raise PlanInvariantError(f"Plans invalid after decision on customer {request.id}")

    plans, departed = advance_with_departures(plans, now, cfg.horizon)
    result.deliveries.update((stop.customer_id, stop.arrival) for stop in departed)

    if audit:
        late = [
            customer_id
            for customer_id, arrival in result.deliveries.items()
            if arrival > customers[customer_id].deadline + 1e-6
        ]
        if late or len(result.deliveries) != result.served:
            raise PlanInvariantError(f"Delivery audit failed, late customers: {late}")

    logger.debug(
        f"Episode done: {result.served}/{result.requests} served, "
        f"{result.forced_denials} forced denials"
    )
    return result


def decision_log_frame(result: EpisodeResult) -> pd.DataFrame:
    return pd.DataFrame(
        [
            (
                record.time,
                record.dist_vehicle_min,
                int(record.vehicle_feasible),
                int(record.drone_feasible),
                int(record.alpha),
            )
            for record in result.decision_log
        ],
        columns=DECISION_LOG_COLUMNS,
    )


def write_decision_log(result: EpisodeResult, target: str | Path) -> Path:
    target = Path(target)
    target.parent.mkdir(parents=True, exist_ok=True)
    decision_log_frame(result).to_csv(target, index=False)
    return target
