"""
Shared test worlds.

The illustrative world: one vehicle and one drone on a Manhattan street
grid, 3 km/h vehicles, 6 km/h drones with arrival times rounded up to the
minute, 10-minute load and service, 20-minute charging, 240-minute
deadlines. Six requests arrive between t=30 and t=60.
"""

from dispatch.services.simulator import Action, Alpha
from dispatch.services.world import (
    CustomerRequest,
    InstanceConfig,
    Location,
    SamplePath,
    TravelModel,
)

ILLUSTRATIVE_REQUESTS = [
    # id, x, y, request time
    (1, 2.0, 3.0, 30.0),
    (2, -3.0, 2.0, 35.0),
    (3, 0.0, 2.0, 50.0),
    (4, 1.5, 1.5, 50.0),
    (5, -1.0, 2.0, 55.0),
    (6, 1.0, 2.0, 60.0),
]

ILLUSTRATIVE_SCRIPT = [
    Alpha.DRONE,
    Alpha.DRONE,
    Alpha.VEHICLE,
    Alpha.VEHICLE,
    Alpha.VEHICLE,
    Alpha.DRONE,
]


def illustrative_config(**changes) -> InstanceConfig:
    values = dict(
        vehicle_load=10,
        drone_load=10,
        vehicle_service=10,
        drone_service=10,
        charge_time=20,
        deadline_len=240,
        fleet_m=1,
        fleet_n=1,
        travel=TravelModel(
            vehicle_speed_kmh=3,
            drone_speed_kmh=6,
            street_factor=1.0,
            drone_round_up=True,
            vehicle_metric="manhattan",
        ),
    )
    values.update(changes)
    return InstanceConfig(**values)


def request(cfg, request_id, x, y, t) -> CustomerRequest:
    return CustomerRequest(request_id, Location(x, y), t, t + cfg.deadline_len)


def illustrative_path(cfg: InstanceConfig) -> SamplePath:
    return SamplePath(
        cfg.config_ref, tuple(request(cfg, *row) for row in ILLUSTRATIVE_REQUESTS)
    )


class ScriptedPolicy:
    """Plays a fixed list of fleet choices and records what it was shown."""

    def __init__(self, script):
        self.script = list(script)
        self.seen = []

    def __call__(self, state, feasibility):
        self.seen.append((state, feasibility))
        alpha = self.script[len(self.seen) - 1]
        return Action.build(alpha, feasibility)


def toy_config(**changes) -> InstanceConfig:
    """A short day with a handful of requests; episodes run in milliseconds."""
    values = dict(
        order_window_end=120,
        t_v_max=180,
        t_d_max=240,
        deadline_len=120,
        expected_requests=30,
        fleet_m=1,
        fleet_n=2,
    )
    values.update(changes)
    return InstanceConfig(**values)
