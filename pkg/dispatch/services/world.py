"""
Problem instances: geometry, travel times, demand generation and sample-path files.
"""

import hashlib
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Annotated, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ..exceptions import PathFileError, SchemaVersionError

logger = logging.getLogger(__name__)

PATH_FILE_MAGIC = "sddpaths"
PATH_FILE_VERSION = 1


@dataclass(frozen=True, slots=True)
class Location:
    x_km: float
    y_km: float

    def __post_init__(self):
        if not (math.isfinite(self.x_km) and math.isfinite(self.y_km)):
            raise ValueError(f"Location coordinates must be finite: {self}")


DEPOT = Location(0.0, 0.0)


class TravelModel(BaseModel):
    """Speeds and distance metrics shared by both fleets."""

    model_config = ConfigDict(frozen=True)

    vehicle_speed_kmh: float = Field(30.0, gt=0)
    drone_speed_kmh: float = Field(40.0, gt=0)
    street_factor: float = Field(1.5, ge=1.0)
    drone_round_up: bool = False
    vehicle_metric: Literal["euclidean", "manhattan"] = "euclidean"


def euclid(a: Location, b: Location) -> float:
    return math.hypot(a.x_km - b.x_km, a.y_km - b.y_km)


def vehicle_travel_time(a: Location, b: Location, tm: TravelModel) -> float:
    """Street travel time in minutes."""
    if tm.vehicle_metric == "manhattan":
        distance = abs(a.x_km - b.x_km) + abs(a.y_km - b.y_km)
    else:
        distance = euclid(a, b)
    return distance * tm.street_factor * 60.0 / tm.vehicle_speed_kmh


def drone_travel_time(a: Location, b: Location, tm: TravelModel) -> float:
    """Point-to-point flight time in minutes."""
    return euclid(a, b) * 60.0 / tm.drone_speed_kmh


class HomogeneousGeography(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["homogeneous"] = "homogeneous"
    sigma_km: float = Field(3.0, gt=0)

    @property
    def max_sigma(self) -> float:
        return self.sigma_km

    def sigmas_for(self, times: np.ndarray) -> np.ndarray:
        return np.full(len(times), self.sigma_km)


class SigmaInterval(BaseModel):
    model_config = ConfigDict(frozen=True)

    start: float = Field(ge=0)
    end: float
    sigma_km: float = Field(gt=0)

    @model_validator(mode="after")
    def check_bounds(self):
        if self.end <= self.start:
            raise ValueError(f"Interval end {self.end} must exceed start {self.start}")
        return self


class TimeVaryingGeography(BaseModel):
    """Customer spread that changes with the request time."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["time_varying"] = "time_varying"
    intervals: tuple[SigmaInterval, ...]

    @field_validator("intervals")
    @classmethod
    def check_contiguous(cls, intervals):
        if not intervals:
            raise ValueError("At least one interval is required")
        if intervals[0].start != 0:
            raise ValueError("Intervals must start at 0")
        for previous, current in zip(intervals, intervals[1:]):
            if current.start != previous.end:
                raise ValueError("Intervals must be contiguous and ordered")
        return intervals

    @property
    def max_sigma(self) -> float:
        return max(interval.sigma_km for interval in self.intervals)

    @property
    def end(self) -> float:
        return self.intervals[-1].end

    def sigmas_for(self, times: np.ndarray) -> np.ndarray:
        starts = np.array([interval.start for interval in self.intervals])
        sigmas = np.array([interval.sigma_km for interval in self.intervals])
        index = np.searchsorted(starts, times, side="right") - 1
        return sigmas[np.clip(index, 0, len(sigmas) - 1)]


Geography = Annotated[
    HomogeneousGeography | TimeVaryingGeography, Field(discriminator="kind")
]


def heterogeneous_geography(order_window_end: float = 420.0) -> TimeVaryingGeography:
    """
    Wide spread in the first and last two hours, 1 km in between.

    Order windows shorter than six hours shrink the wide edges to a third
    of the window each.
    """
    edge = min(120.0, order_window_end / 3)
    return TimeVaryingGeography(
        intervals=(
            SigmaInterval(start=0, end=edge, sigma_km=3.0),
            SigmaInterval(start=edge, end=order_window_end - edge, sigma_km=1.0),
            SigmaInterval(start=order_window_end - edge, end=order_window_end, sigma_km=3.0),
        )
    )


class InstanceConfig(BaseModel):
    """Constants of one dispatching instance (times in minutes)."""

    model_config = ConfigDict(frozen=True)

    order_window_end: float = Field(420.0, gt=0)
    t_v_max: float = 480.0
    t_d_max: float = 720.0
    deadline_len: float = Field(240.0, ge=0)
    vehicle_load: float = Field(3.0, ge=0)
    drone_load: float = Field(3.0, ge=0)
    vehicle_service: float = Field(3.0, ge=0)
    drone_service: float = Field(3.0, ge=0)
    charge_time: float = Field(20.0, ge=0)
    expected_requests: float = Field(500.0, ge=0)
    fleet_m: int = Field(3, ge=0)
    fleet_n: int = Field(10, ge=0)
    geography: Geography = Field(default_factory=HomogeneousGeography)
    travel: TravelModel = Field(default_factory=TravelModel)
    seed: int = 0
    max_distance_km: float | None = Field(None, gt=0)

    @model_validator(mode="after")
    def check_window(self):
        if self.order_window_end > min(self.t_v_max, self.t_d_max):
            raise ValueError(
                "order_window_end must not exceed the vehicle and drone shift ends"
            )
        if isinstance(self.geography, TimeVaryingGeography):
            if self.geography.end != self.order_window_end:
                raise ValueError("Time-varying intervals must cover the order window")
        return self

    @property
    def horizon(self) -> float:
        return max(self.t_v_max, self.t_d_max)

    @property
    def config_ref(self) -> str:
        digest = hashlib.sha256(self.model_dump_json().encode()).hexdigest()
        return digest[:16]


@dataclass(frozen=True, slots=True)
class CustomerRequest:
    id: int
    location: Location
    request_time: float
    deadline: float


@dataclass(frozen=True, slots=True)
class SamplePath:
    """One simulated day of requests, ordered by request time."""

    config_ref: str
    requests: tuple[CustomerRequest, ...]

    def __post_init__(self):
        for index, request in enumerate(self.requests, start=1):
            if request.id != index:
                raise ValueError(f"Request ids must be sequential, got {request.id}")
        times = [request.request_time for request in self.requests]
        if any(later < earlier for earlier, later in zip(times, times[1:])):
            raise ValueError("Request times must be non-decreasing")

    def __len__(self):
        return len(self.requests)


def _arrival_times(rng: np.random.Generator, cfg: InstanceConfig) -> np.ndarray:
    scale = cfg.order_window_end / cfg.expected_requests
    chunk = int(cfg.expected_requests + 6 * math.sqrt(cfg.expected_requests)) + 16
    arrivals = np.cumsum(rng.exponential(scale, chunk))
    while arrivals[-1] <= cfg.order_window_end:
        more = arrivals[-1] + np.cumsum(rng.exponential(scale, chunk))
        arrivals = np.concatenate([arrivals, more])
    return arrivals[arrivals <= cfg.order_window_end]


def gen_sample_path(cfg: InstanceConfig, seed: int) -> SamplePath:
    """Draw one day of Poisson requests around the depot."""
    if cfg.expected_requests == 0:
        return SamplePath(cfg.config_ref, ())

    rng = np.random.default_rng(seed)
    times = _arrival_times(rng, cfg)
    sigmas = cfg.geography.sigmas_for(times)
    coords = rng.standard_normal((len(times), 2)) * sigmas[:, None]

    if cfg.max_distance_km is not None:
        far = np.hypot(coords[:, 0], coords[:, 1]) > cfg.max_distance_km
        while far.any():
            coords[far] = rng.standard_normal((int(far.sum()), 2)) * sigmas[far][:, None]
            far = np.hypot(coords[:, 0], coords[:, 1]) > cfg.max_distance_km

    requests = tuple(
        CustomerRequest(
            id=index,
            location=Location(float(x), float(y)),
            request_time=float(t),
            deadline=float(t) + cfg.deadline_len,
        )
        for index, (t, (x, y)) in enumerate(zip(times, coords), start=1)
    )
    return SamplePath(cfg.config_ref, requests)


def gen_sample_paths(cfg: InstanceConfig, count: int, seed: int) -> list[SamplePath]:
    """Draw `count` days; day i uses seed + i."""
    return [gen_sample_path(cfg, seed + index) for index in range(count)]


@dataclass(frozen=True)
class PathSet:
    config: InstanceConfig
    paths: list[SamplePath]


def save_paths(paths: list[SamplePath], uri: str | Path, cfg: InstanceConfig) -> Path:
    """
    Write sample paths as line-oriented text.

    Layout: a magic/version line, a config line, then per path a `path` line
    followed by one `id,t,x,y` line per request. Floats use repr so a reload
    is bit-exact.
    """
    lines = [
        f"# {PATH_FILE_MAGIC} v{PATH_FILE_VERSION}",
        f"# config {cfg.model_dump_json()}",
    ]
    for index, path in enumerate(paths):
        lines.append(f"path {index} {path.config_ref} {len(path.requests)}")
        for request in path.requests:
            lines.append(
                f"{request.id},{request.request_time!r},"
                f"{request.location.x_km!r},{request.location.y_km!r}"
            )

    target = Path(uri)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text("\n".join(lines) + "\n")
    logger.info(f"Saved {len(paths)} sample paths to {target}")
    return target


def load_paths(uri: str | Path) -> PathSet:
    """Read a file written by save_paths."""
    lines = Path(uri).read_text().splitlines()
    if len(lines) < 2:
        raise PathFileError(f"{uri}: missing header")

    header = lines[0].split()
    if len(header) != 3 or header[1] != PATH_FILE_MAGIC:
        raise PathFileError(f"{uri}: not a sample-path file")
    if header[2] != f"v{PATH_FILE_VERSION}":
        raise SchemaVersionError(
            f"{uri}: schema {header[2]} unsupported, expected v{PATH_FILE_VERSION}"
        )

    prefix = "# config "
    if not lines[1].startswith(prefix):
        raise PathFileError(f"{uri}: missing config line")
    try:
        cfg = InstanceConfig.model_validate(json.loads(lines[1][len(prefix) :]))
    except ValueError as exc:
        raise PathFileError(f"{uri}: bad config line ({exc})") from exc

    paths = []
    cursor = 2
    while cursor < len(lines):
        fields = lines[cursor].split()
        if len(fields) != 4 or fields[0] != "path" or not fields[3].isdigit():
            raise PathFileError(f"{uri}:{cursor + 1}: expected a path line")
        config_ref, count = fields[2], int(fields[3])
        requests = []
        for line in lines[cursor + 1 : cursor + 1 + count]:
            try:
                request_id, t, x, y = line.split(",")
                t = float(t)
                requests.append(
                    CustomerRequest(
                        id=int(request_id),
                        location=Location(float(x), float(y)),
                        request_time=t,
                        deadline=t + cfg.deadline_len,
                    )
                )
            except ValueError as exc:
                raise PathFileError(f"{uri}: bad request line {line!r}") from exc
        if len(requests) != count:
            raise PathFileError(f"{uri}: path {fields[1]} is truncated")
        try:
            paths.append(SamplePath(config_ref, tuple(requests)))
        except ValueError as exc:
            raise PathFileError(f"{uri}: path {fields[1]} is out of order ({exc})") from exc
        cursor += count + 1

    return PathSet(cfg, paths)
