"""
Planned routes for vehicles and drones: feasibility checks, vehicle insertion,
FIFO drone assignment and plan advancement between decision points.
"""

import logging
import math
from dataclasses import dataclass
from typing import Mapping

from ..exceptions import UnknownCustomerError
from .world import (
    DEPOT,
    CustomerRequest,
    InstanceConfig,
    drone_travel_time,
    vehicle_travel_time,
)

logger = logging.getLogger(__name__)

INFEASIBLE_DELTA = 10000.0
TIME_TOLERANCE = 1e-6


@dataclass(frozen=True, slots=True)
class DepotStop:
    """
    A stay at the depot.

    `ready` is the earliest time loading may begin; it includes the charge
    time after a drone delivery and is never moved back by clamping.
    """

    arrival: float
    start: float
    ready: float = 0.0

    def loading_from(self, now: float) -> float:
        return max(self.arrival, self.ready, now)


@dataclass(frozen=True, slots=True)
class CustomerStop:
    customer_id: int
    arrival: float


Stop = DepotStop | CustomerStop


@dataclass(frozen=True, slots=True)
class _Plan:
    stops: tuple[Stop, ...]

    @property
    def first(self) -> DepotStop:
        return self.stops[0]

    @property
    def last(self) -> DepotStop:
        return self.stops[-1]

    @property
    def customers(self) -> tuple[CustomerStop, ...]:
        return tuple(stop for stop in self.stops if isinstance(stop, CustomerStop))

    @property
    def availability(self) -> float:
        return self.first.arrival

    @property
    def completion(self) -> float:
        return self.last.arrival

    def is_idle(self, now: float) -> bool:
        return len(self.stops) == 1 and self.first.loading_from(now) <= now


class VehiclePlan(_Plan):
    """(N, C*, N): one planned tour starting at the next depot visit."""

    __slots__ = ()


class DronePlan(_Plan):
    """N, (C, N)*: a FIFO queue of single-customer round trips."""

    __slots__ = ()


@dataclass(frozen=True, slots=True)
class FleetPlans:
    vehicle_plans: tuple[VehiclePlan, ...]
    drone_plans: tuple[DronePlan, ...]
    pending_vehicle: frozenset[int] = frozenset()
    pending_drone: frozenset[int] = frozenset()

    @classmethod
    def initial(cls, cfg: InstanceConfig) -> "FleetPlans":
        return cls(
            vehicle_plans=tuple(
                VehiclePlan((DepotStop(0.0, cfg.t_v_max),)) for _ in range(cfg.fleet_m)
            ),
            drone_plans=tuple(
                DronePlan((DepotStop(0.0, cfg.t_d_max),)) for _ in range(cfg.fleet_n)
            ),
        )


@dataclass(frozen=True, slots=True)
class VehicleInsertion:
    vehicle_plans: tuple[VehiclePlan, ...]
    vehicle_index: int
    position: int
    delta: float


@dataclass(frozen=True, slots=True)
class DroneAssignment:
    drone_plans: tuple[DronePlan, ...]
    drone_index: int


def _lookup(customers: Mapping[int, CustomerRequest], customer_id: int) -> CustomerRequest:
    try:
        return customers[customer_id]
    except KeyError:
        raise UnknownCustomerError(f"Unknown customer id {customer_id}") from None


def _close(a: float, b: float) -> bool:
    return abs(a - b) <= TIME_TOLERANCE


def drone_event_time(t: float, cfg: InstanceConfig) -> float:
    if cfg.travel.drone_round_up:
        return float(math.ceil(t - 1e-9))
    return t


def _vehicle_schedule(start, requests, cfg):
    """Arrival times along a tour starting to load at `start`, plus its return time."""
    arrivals = []
    here = DEPOT
    t = start + cfg.vehicle_load
    for request in requests:
        t += vehicle_travel_time(here, request.location, cfg.travel)
        arrivals.append(t)
        t += cfg.vehicle_service
        here = request.location
    return arrivals, t + vehicle_travel_time(here, DEPOT, cfg.travel)


def _drone_trip(start, request, cfg):
    leg = drone_travel_time(DEPOT, request.location, cfg.travel)
    arrival = drone_event_time(start + cfg.drone_load + leg, cfg)
    return arrival, drone_event_time(arrival + cfg.drone_service + leg, cfg)


def validate_vehicle_plan(
    plan: VehiclePlan, cfg: InstanceConfig, customers: Mapping[int, CustomerRequest]
) -> bool:
    stops = plan.stops
    if not stops or not isinstance(stops[0], DepotStop):
        return False
    first = stops[0]
    if first.start < first.arrival or first.start < first.ready:
        return False
    if len(stops) == 1:
        return first.arrival <= cfg.t_v_max + TIME_TOLERANCE

    middle, last = stops[1:-1], stops[-1]
    if not isinstance(last, DepotStop) or not middle:
        return False
    if not all(isinstance(stop, CustomerStop) for stop in middle):
        return False
    ids = [stop.customer_id for stop in middle]
    if len(set(ids)) != len(ids):
        return False

    requests = [_lookup(customers, customer_id) for customer_id in ids]
    arrivals, ret = _vehicle_schedule(first.start, requests, cfg)
    for stop, request, expected in zip(middle, requests, arrivals):
        if not _close(stop.arrival, expected):
            return False
        if stop.arrival > request.deadline + TIME_TOLERANCE:
            return False
    if not _close(last.arrival, ret) or last.start < last.arrival:
        return False
    return last.arrival <= cfg.t_v_max + TIME_TOLERANCE


def validate_drone_plan(
    plan: DronePlan, cfg: InstanceConfig, customers: Mapping[int, CustomerRequest]
) -> bool:
    stops = plan.stops
    if len(stops) % 2 == 0:
        return False
    for index, stop in enumerate(stops):
        expected_type = DepotStop if index % 2 == 0 else CustomerStop
        if not isinstance(stop, expected_type):
            return False
    ids = [stop.customer_id for stop in stops[1::2]]
    if len(set(ids)) != len(ids):
        return False

    first = stops[0]
    if first.start < first.arrival or first.start < first.ready:
        return False

    for index in range(1, len(stops), 2):
        depot, stop, back = stops[index - 1], stops[index], stops[index + 1]
        request = _lookup(customers, stop.customer_id)
        arrival, ret = _drone_trip(depot.start, request, cfg)
        if not (_close(stop.arrival, arrival) and _close(back.arrival, ret)):
            return False
        if stop.arrival > request.deadline + TIME_TOLERANCE:
            return False
        if back.start < back.arrival:
            return False
        # charging before the next load
        if index + 2 < len(stops) and back.start < back.arrival + cfg.charge_time - TIME_TOLERANCE:
            return False

    return stops[-1].arrival <= cfg.t_d_max + TIME_TOLERANCE


def validate_fleet_plans(
    plans: FleetPlans, cfg: InstanceConfig, customers: Mapping[int, CustomerRequest]
) -> bool:
    """All plans valid and pending sets match the planned customers."""
    if not all(validate_vehicle_plan(plan, cfg, customers) for plan in plans.vehicle_plans):
        return False
    if not all(validate_drone_plan(plan, cfg, customers) for plan in plans.drone_plans):
        return False
    vehicle_ids = [s.customer_id for p in plans.vehicle_plans for s in p.customers]
    drone_ids = [s.customer_id for p in plans.drone_plans for s in p.customers]
    return (
        len(vehicle_ids) == len(set(vehicle_ids))
        and len(drone_ids) == len(set(drone_ids))
        and set(vehicle_ids) == plans.pending_vehicle
        and set(drone_ids) == plans.pending_drone
        and not plans.pending_vehicle & plans.pending_drone
    )


def best_vehicle_insertion(
    plans: FleetPlans,
    request: CustomerRequest,
    cfg: InstanceConfig,
    customers: Mapping[int, CustomerRequest],
    now: float | None = None,
) -> VehicleInsertion | None:
    """
    Cheapest feasible insertion of `request` into a vehicle's planned tour.

    An idle vehicle (lowest index) gets a fresh one-customer tour. Otherwise
    every position of every planned tour is tried and the insertion with the
    smallest increase in tour completion time wins; ties go to the lower sum
    of planned arrival times, then the lower vehicle index and position.
    """
    now = request.request_time if now is None else now

    for index, plan in enumerate(plans.vehicle_plans):
        if plan.is_idle(now):
            insertion = _try_vehicle_insertion(plans, index, 0, request, cfg, customers, now)
            if insertion is not None:
                return insertion[0]
            break

    best, best_key = None, None
    for index, plan in enumerate(plans.vehicle_plans):
        for position in range(len(plan.customers) + 1):
            attempt = _try_vehicle_insertion(plans, index, position, request, cfg, customers, now)
            if attempt is None:
                continue
            insertion, arrival_sum = attempt
            key = (round(insertion.delta, 9), round(arrival_sum, 9), index, position)
            if best_key is None or key < best_key:
                best, best_key = insertion, key
    return best


def _try_vehicle_insertion(plans, index, position, request, cfg, customers, now):
    plan = plans.vehicle_plans[index]
    ids = [stop.customer_id for stop in plan.customers]
    route = [_lookup(customers, customer_id) for customer_id in ids]
    route.insert(position, request)

    start = plan.first.loading_from(now)
    arrivals, ret = _vehicle_schedule(start, route, cfg)
    if ret > cfg.t_v_max + TIME_TOLERANCE:
        return None
    if any(a > r.deadline + TIME_TOLERANCE for a, r in zip(arrivals, route)):
        return None

    first = DepotStop(plan.first.arrival, start, plan.first.ready)
    updated = VehiclePlan(
        (
            first,
            *(CustomerStop(r.id, a) for r, a in zip(route, arrivals)),
            DepotStop(ret, cfg.t_v_max, ret),
        )
    )
    vehicle_plans = plans.vehicle_plans[:index] + (updated,) + plans.vehicle_plans[index + 1 :]
    insertion = VehicleInsertion(vehicle_plans, index, position, ret - plan.completion)
    return insertion, sum(arrivals)


def delta_vehicle(
    plans: FleetPlans,
    request: CustomerRequest,
    cfg: InstanceConfig,
    customers: Mapping[int, CustomerRequest],
    now: float | None = None,
) -> float:
    insertion = best_vehicle_insertion(plans, request, cfg, customers, now)
    return INFEASIBLE_DELTA if insertion is None else insertion.delta


def drone_fifo_assignment(
    plans: FleetPlans,
    request: CustomerRequest,
    cfg: InstanceConfig,
    now: float | None = None,
) -> DroneAssignment | None:
    """Append a round trip to the idle drone, else the earliest available one."""
    now = request.request_time if now is None else now

    order = sorted(
        range(len(plans.drone_plans)),
        key=lambda i: (
            not plans.drone_plans[i].is_idle(now),
            plans.drone_plans[i].last.loading_from(now),
            i,
        ),
    )
    for index in order:
        plan = plans.drone_plans[index]
        last = plan.last
        start = last.loading_from(now)
        arrival, ret = _drone_trip(start, request, cfg)
        if arrival > request.deadline + TIME_TOLERANCE or ret > cfg.t_d_max + TIME_TOLERANCE:
            continue
        updated = DronePlan(
            plan.stops[:-1]
            + (
                DepotStop(last.arrival, start, last.ready),
                CustomerStop(request.id, arrival),
                DepotStop(ret, cfg.t_d_max, ret + cfg.charge_time),
            )
        )
        drone_plans = plans.drone_plans[:index] + (updated,) + plans.drone_plans[index + 1 :]
        return DroneAssignment(drone_plans, index)
    return None


def _clamp(stops, t):
    first = stops[0]
    if first.arrival >= t:
        return stops
    return (DepotStop(t, first.start, max(first.ready, t)),) + stops[1:]


def advance_with_departures(
    plans: FleetPlans, t_from: float, t_to: float
) -> tuple[FleetPlans, list[CustomerStop]]:
    """
    Move plans from t_from to t_to.

    Tours whose loading started strictly before t_to are departed: their
    customers leave the plan and the pending sets, and the plan keeps only
    the next depot return. Availabilities earlier than t_to are clamped.
    Returns the new plans and the stops that departed.
    """
    if t_to < t_from:
        raise ValueError(f"Cannot advance plans backwards from {t_from} to {t_to}")

    departed = []
    vehicle_plans = []
    for plan in plans.vehicle_plans:
        stops = plan.stops
        if len(stops) > 1 and stops[0].start < t_to:
            departed.extend(stops[1:-1])
            stops = stops[-1:]
        vehicle_plans.append(VehiclePlan(_clamp(stops, t_to)))

    drone_plans = []
    for plan in plans.drone_plans:
        stops = plan.stops
        while len(stops) > 1 and stops[0].start < t_to:
            departed.append(stops[1])
            stops = stops[2:]
        drone_plans.append(DronePlan(_clamp(stops, t_to)))

    departed_ids = {stop.customer_id for stop in departed}
    advanced = FleetPlans(
        vehicle_plans=tuple(vehicle_plans),
        drone_plans=tuple(drone_plans),
        pending_vehicle=plans.pending_vehicle - departed_ids,
        pending_drone=plans.pending_drone - departed_ids,
    )
    return advanced, departed


def advance_plans(plans: FleetPlans, t_from: float, t_to: float) -> FleetPlans:
    return advance_with_departures(plans, t_from, t_to)[0]


def _fmt(t: float) -> str:
    return f"{t:.10g}"


def format_plan(plan: VehiclePlan | DronePlan) -> str:
    """One stop per line: `N <a> -> <s>` or `C<id> <a>`."""
    lines = []
    for stop in plan.stops:
        if isinstance(stop, DepotStop):
            lines.append(f"N {_fmt(stop.arrival)} -> {_fmt(stop.start)}")
        else:
            lines.append(f"C{stop.customer_id} {_fmt(stop.arrival)}")
    return "\n".join(lines)
