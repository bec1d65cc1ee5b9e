"""
Deep Q-learning over a bank of feasibility-specific networks with
epsilon-greedy exploration, Monte-Carlo return targets and experience replay.
"""

import json
import logging
import math
import struct
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Literal

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..exceptions import CheckpointError, CheckpointMismatchError, ModelFormatError
from .features import FeatureSetSpec, FeatureVector, extract, feature_dim
from .network import (
    AdamState,
    MLPParams,
    TrainBatch,
    adam_step,
    deserialize,
    forward,
    gradient,
    init_params,
    lr_at,
    serialize,
)
from .simulator import Action, Alpha, FeasibilityPair, State, run_episode
from .world import InstanceConfig, SamplePath

logger = logging.getLogger(__name__)

BANK_MAGIC = b"SDQB"
BANK_VERSION = 1
LEARNING_CURVE_COLUMNS = [
    "step",
    "eval_mean_served",
    "loss_vehicle_only",
    "loss_drone_only",
    "loss_both",
    "loss_no_reject",
]


class NetworkId(IntEnum):
    VEHICLE_ONLY = 1
    DRONE_ONLY = 2
    BOTH = 3
    NO_REJECT = 4


NETWORK_ACTIONS = {
    NetworkId.VEHICLE_ONLY: (Alpha.VEHICLE, Alpha.NO_SERVICE),
    NetworkId.DRONE_ONLY: (Alpha.DRONE, Alpha.NO_SERVICE),
    NetworkId.BOTH: (Alpha.VEHICLE, Alpha.DRONE, Alpha.NO_SERVICE),
    NetworkId.NO_REJECT: (Alpha.VEHICLE, Alpha.DRONE),
}

BankMode = Literal["q", "q_no_rej"]

MODE_NETWORKS = {
    "q": (NetworkId.VEHICLE_ONLY, NetworkId.DRONE_ONLY, NetworkId.BOTH),
    "q_no_rej": (NetworkId.NO_REJECT,),
}


class TrainingSchedule(BaseModel):
    model_config = ConfigDict(frozen=True)

    total_steps: int = Field(400_000, ge=0)
    train_paths: int = Field(500, ge=1)
    minibatch: int = Field(5000, ge=1)
    buffer_capacity: int = Field(50_000, ge=1)
    eps_start: float = Field(1.0, ge=0, le=1)
    eps_end: float = Field(0.01, ge=0, le=1)
    eps_decay_fraction: float = Field(0.8, gt=0, le=1)
    eval_interval: int = Field(100, ge=1)
    eval_paths: int = Field(50, ge=0)
    lr_initial: float = Field(0.01, gt=0)
    lr_base: float = Field(0.96, gt=0, le=1)
    lr_decay_steps: float = Field(6000, gt=0)
    hidden_layers: int = Field(2, ge=0)
    hidden_nodes: int | None = Field(None, ge=1)
    replay: bool = True
    mode: BankMode = "q"

    @model_validator(mode="after")
    def check_schedule(self):
        if self.minibatch > self.buffer_capacity:
            raise ValueError("minibatch must not exceed buffer_capacity")
        if self.eps_end > self.eps_start:
            raise ValueError("eps_end must not exceed eps_start")
        return self


def eps_at(step: int, schedule: TrainingSchedule) -> float:
    """Linear decay to eps_end at eps_decay_fraction of the budget, flat after."""
    horizon = schedule.eps_decay_fraction * schedule.total_steps
    if horizon <= 0:
        return schedule.eps_end
    fraction = min(step / horizon, 1.0)
    return schedule.eps_start + (schedule.eps_end - schedule.eps_start) * fraction


@dataclass(frozen=True)
class Experience:
    features: FeatureVector
    action_index: int
    return_to_go: float
    network: NetworkId


class ReplayBuffer:
    """Fixed-capacity ring of experiences; the oldest entry is overwritten first."""

    def __init__(self, capacity: int, input_dim: int):
        self.capacity = capacity
        self.inputs = np.zeros((capacity, input_dim))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.returns = np.zeros(capacity)
        self._next = 0
        self._size = 0

    def __len__(self):
        return self._size

    def push(self, experience: Experience):
        slot = self._next
        self.inputs[slot] = experience.features.normalized
        self.actions[slot] = experience.action_index
        self.returns[slot] = experience.return_to_go
        self._next = (slot + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def clear(self):
        self._next = 0
        self._size = 0

    def ordered(self) -> TrainBatch:
        """Stored entries from oldest to newest."""
        start = self._next if self._size == self.capacity else 0
        index = (start + np.arange(self._size)) % self.capacity
        return TrainBatch(self.inputs[index], self.actions[index], self.returns[index])

    def sample(self, count: int, rng: np.random.Generator) -> TrainBatch:
        index = rng.integers(0, self._size, size=count)
        return TrainBatch(self.inputs[index], self.actions[index], self.returns[index])


@dataclass
class NetworkBank:
    cfg_fleet: tuple[int, int]
    feature_spec: FeatureSetSpec
    mode: BankMode
    params: dict[NetworkId, MLPParams]
    adam: dict[NetworkId, AdamState]
    buffers: dict[NetworkId, ReplayBuffer] = field(default_factory=dict)

    @classmethod
    def create(
        cls,
        cfg: InstanceConfig,
        feature_spec: FeatureSetSpec,
        schedule: TrainingSchedule,
        rng: np.random.Generator,
    ) -> "NetworkBank":
        input_dim = feature_dim(feature_spec, cfg)
        width = schedule.hidden_nodes or 10 * max(cfg.fleet_m, 1)
        params, adam, buffers = {}, {}, {}
        for network in MODE_NETWORKS[schedule.mode]:
            dims = [input_dim] + [width] * schedule.hidden_layers + [len(NETWORK_ACTIONS[network])]
            params[network] = init_params(dims, rng)
            adam[network] = AdamState.zeros_like(params[network])
            buffers[network] = ReplayBuffer(schedule.buffer_capacity, input_dim)
        return cls((cfg.fleet_m, cfg.fleet_n), feature_spec, schedule.mode, params, adam, buffers)

    @property
    def input_dim(self) -> int:
        return next(iter(self.params.values())).layer_dims[0]

    def q_values(self, network: NetworkId, normalized: np.ndarray) -> np.ndarray:
        return forward(self.params[network], normalized)

    def snapshot(self) -> "NetworkBank":
        """Copy of the weights and optimizer state without replay buffers."""
        return NetworkBank(
            self.cfg_fleet,
            self.feature_spec,
            self.mode,
            {n: p.copy() for n, p in self.params.items()},
            {n: a.copy() for n, a in self.adam.items()},
        )

    def check_compatible(self, cfg: InstanceConfig, mode: BankMode | None = None):
        if mode is not None and self.mode != mode:
            raise CheckpointMismatchError(f"Checkpoint holds a {self.mode} bank, policy needs {mode}")
        if self.cfg_fleet != (cfg.fleet_m, cfg.fleet_n):
            raise CheckpointMismatchError(
                f"Checkpoint trained for fleet {self.cfg_fleet}, "
                f"instance has ({cfg.fleet_m}, {cfg.fleet_n})"
            )
        if self.input_dim != feature_dim(self.feature_spec, cfg):
            raise CheckpointMismatchError("Checkpoint input size does not match the feature set")


def network_for(feasibility: FeasibilityPair, mode: BankMode) -> NetworkId | None:
    if mode == "q_no_rej":
        both = feasibility.vehicle_feasible and feasibility.drone_feasible
        return NetworkId.NO_REJECT if both else None
    if feasibility.vehicle_feasible and feasibility.drone_feasible:
        return NetworkId.BOTH
    if feasibility.vehicle_feasible:
        return NetworkId.VEHICLE_ONLY
    if feasibility.drone_feasible:
        return NetworkId.DRONE_ONLY
    return None


@dataclass(frozen=True)
class Choice:
    alpha: Alpha
    action_index: int | None = None
    network: NetworkId | None = None


def choose_action(
    bank: NetworkBank,
    features: FeatureVector | None,
    feasibility: FeasibilityPair,
    eps: float,
    rng: np.random.Generator | None,
) -> Choice:
    """
    Epsilon-greedy choice with the network matching the feasibility pattern.

    Without a matching network the only feasible fleet is taken, or the
    request is denied when no fleet can serve it.
    """
    network = network_for(feasibility, bank.mode)
    if network is None:
        alphas = feasibility.feasible_alphas()
        return Choice(alphas[0] if alphas else Alpha.NO_SERVICE)

    actions = NETWORK_ACTIONS[network]
    if eps > 0 and rng.random() < eps:
        index = int(rng.integers(len(actions)))
    else:
        index = int(np.argmax(bank.q_values(network, features.normalized)))
    return Choice(actions[index], index, network)


@dataclass(frozen=True)
class DecisionTrace:
    network: NetworkId | None
    action_index: int | None
    features: FeatureVector | None


class BankPolicy:
    """Dispatch with a network bank; records a trace of every decision."""

    def __init__(self, bank: NetworkBank, cfg: InstanceConfig, eps: float = 0.0, rng=None):
        self.bank = bank
        self.cfg = cfg
        self.eps = eps
        self.rng = rng
        self.trace: list[DecisionTrace] = []

    def __call__(self, state: State, feasibility: FeasibilityPair) -> Action:
        features = None
        if network_for(feasibility, self.bank.mode) is not None:
            features = extract(state, feasibility, self.bank.feature_spec, self.cfg)
        choice = choose_action(self.bank, features, feasibility, self.eps, self.rng)
        self.trace.append(DecisionTrace(choice.network, choice.action_index, features))
        return Action.build(choice.alpha, feasibility)


def finalize_episode_returns(traces: list[DecisionTrace], rewards: list[int]) -> list[Experience]:
    """Tag each network decision with the reward collected from it to the end of the day."""
    if len(traces) != len(rewards):
        raise ValueError("Every decision needs exactly one reward")
    returns = np.cumsum(np.asarray(rewards[::-1], dtype=np.float64))[::-1]
    return [
        Experience(trace.features, trace.action_index, float(ret), trace.network)
        for trace, ret in zip(traces, returns)
        if trace.network is not None
    ]


def train_step(
    bank: NetworkBank,
    experiences: list[Experience],
    schedule: TrainingSchedule,
    step: int,
    rng: np.random.Generator,
) -> tuple[NetworkBank, dict[NetworkId, float]]:
    """Store the new experiences and apply one Adam step per network with data."""
    if not schedule.replay:
        for buffer in bank.buffers.values():
            buffer.clear()
    for experience in experiences:
        bank.buffers[experience.network].push(experience)

    lr = lr_at(step, schedule.lr_initial, schedule.lr_base, schedule.lr_decay_steps)
    losses = {}
    for network, buffer in bank.buffers.items():
        if not len(buffer):
            continue
        batch = buffer.sample(min(schedule.minibatch, len(buffer)), rng)
        grads, loss = gradient(bank.params[network], batch)
        bank.params[network], bank.adam[network] = adam_step(
            bank.params[network], bank.adam[network], grads, lr
        )
        losses[network] = loss
    return bank, losses


def evaluate_bank(bank: NetworkBank, paths: list[SamplePath], cfg: InstanceConfig) -> float:
    """Mean served customers under the greedy policy."""
    if not paths:
        return 0.0
    served = [run_episode(BankPolicy(bank, cfg), path, cfg).served for path in paths]
    return float(np.mean(served))


@dataclass(frozen=True)
class CurvePoint:
    step: int
    eval_mean_served: float
    losses: dict[NetworkId, float]


@dataclass
class TrainingOutcome:
    bank: NetworkBank
    best_bank: NetworkBank
    best_eval: float
    curve: list[CurvePoint]


def training_run(
    cfg: InstanceConfig,
    paths: list[SamplePath],
    schedule: TrainingSchedule,
    seed: int,
    eval_paths: list[SamplePath] | None = None,
    feature_spec: FeatureSetSpec | None = None,
) -> TrainingOutcome:
    """
    One sample path per step, drawn with replacement from `paths`.

    Every eval_interval steps the greedy policy is scored on `eval_paths`
    and the best bank so far is kept.
    """
    if not paths:
        raise ValueError("training_run needs at least one sample path")

    rng = np.random.default_rng(seed)
    feature_spec = feature_spec or FeatureSetSpec()
    bank = NetworkBank.create(cfg, feature_spec, schedule, rng)
    best, best_eval = bank.snapshot(), -math.inf
    curve = []

    logger.info(
        f"Training {schedule.mode} bank for {schedule.total_steps} steps "
        f"on fleet ({cfg.fleet_m}, {cfg.fleet_n}) with {feature_spec.variant} features"
    )
    for step in range(1, schedule.total_steps + 1):
        path = paths[int(rng.integers(len(paths)))]
        policy = BankPolicy(bank, cfg, eps_at(step - 1, schedule), rng)
        result = run_episode(policy, path, cfg)
        rewards = [int(record.alpha != Alpha.NO_SERVICE) for record in result.decision_log]
        experiences = finalize_episode_returns(policy.trace, rewards)
        _, losses = train_step(bank, experiences, schedule, step - 1, rng)

        if eval_paths and step % schedule.eval_interval == 0:
            score = evaluate_bank(bank, eval_paths, cfg)
            curve.append(CurvePoint(step, score, losses))
            logger.info(f"Step {step}: greedy mean served {score:.2f}")
            if score > best_eval:
                best, best_eval = bank.snapshot(), score

    if best_eval == -math.inf:
        best = bank.snapshot()
        best_eval = evaluate_bank(bank, eval_paths or [], cfg)
    return TrainingOutcome(bank, best, best_eval, curve)


def learning_curve_frame(curve: list[CurvePoint]) -> pd.DataFrame:
    rows = [
        [point.step, point.eval_mean_served]
        + [point.losses.get(network, np.nan) for network in NetworkId]
        for point in curve
    ]
    return pd.DataFrame(rows, columns=LEARNING_CURVE_COLUMNS)


def save_bank(bank: NetworkBank, target: str | Path) -> Path:
    """
    Checkpoint layout: magic b"SDQB", u16 version, u32 metadata length,
    UTF-8 JSON metadata, then per network u8 id, u64 length and a model payload.
    """
    meta = json.dumps(
        {
            "fleet_m": bank.cfg_fleet[0],
            "fleet_n": bank.cfg_fleet[1],
            "mode": bank.mode,
            "feature_spec": bank.feature_spec.model_dump(mode="json"),
            "networks": [int(n) for n in bank.params],
        },
        sort_keys=True,
    ).encode()
    parts = [struct.pack("<4sHI", BANK_MAGIC, BANK_VERSION, len(meta)), meta]
    for network, params in bank.params.items():
        payload = serialize(params, bank.adam[network])
        parts.append(struct.pack("<BQ", int(network), len(payload)))
        parts.append(payload)

    target = Path(target)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_bytes(b"".join(parts))
    return target


def load_bank(source: str | Path) -> NetworkBank:
    data = Path(source).read_bytes()
    try:
        magic, version, meta_len = struct.unpack_from("<4sHI", data, 0)
        if magic != BANK_MAGIC:
            raise CheckpointError(f"{source}: not a network-bank checkpoint")
        if version != BANK_VERSION:
            raise CheckpointError(f"{source}: checkpoint v{version} unsupported")
        offset = struct.calcsize("<4sHI")
        meta = json.loads(data[offset : offset + meta_len])
        offset += meta_len

        params, adam = {}, {}
        for _ in meta["networks"]:
            network, length = struct.unpack_from("<BQ", data, offset)
            offset += struct.calcsize("<BQ")
            network = NetworkId(network)
            params[network], adam[network] = deserialize(data[offset : offset + length])
            offset += length
    except (struct.error, ValueError, KeyError, ModelFormatError) as exc:
        raise CheckpointError(f"{source}: corrupt checkpoint ({exc})") from exc

    return NetworkBank(
        (meta["fleet_m"], meta["fleet_n"]),
        FeatureSetSpec.model_validate(meta["feature_spec"]),
        meta["mode"],
        params,
        adam,
    )
