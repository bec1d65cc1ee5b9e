"""
Closed-form dispatch probabilities for a single idle drone near the end of
its shift, the accept/deny distance threshold derived from them, and a
Monte-Carlo simulation of the same simplified world.

Units: one time unit is one minute; distances are vehicle travel times and
the drone covers c of them per time unit.
"""

import logging
import math
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Literal

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..exceptions import InfeasibleParamsError

logger = logging.getLogger(__name__)

ALWAYS_ACCEPT = math.inf
CURVE_COLUMNS = ["t_prime", "b_prime", "p_accept", "p_reject"]
ORACLE_COLUMNS = [
    "t_prime",
    "b_prime",
    "scenario",
    "closed_form",
    "mc_estimate",
    "mc_stderr",
    "agrees",
]

Scenario = Literal["accept_one_more", "reject_two"]


class AnalyticParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    c: float = Field(1.5, gt=1)
    mu: float = Field(1.0, gt=0)
    d_max: float = Field(40.0, gt=0)
    horizon: float = Field(420.0, gt=0)
    t_prime: float = Field(0.0, ge=0)
    b_prime: float = Field(0.0, ge=0)

    @model_validator(mode="after")
    def check_ranges(self):
        if self.t_prime > self.horizon:
            raise ValueError("t_prime must not exceed the horizon")
        if self.b_prime > self.d_max:
            raise ValueError("b_prime must not exceed d_max")
        return self

    @property
    def remaining(self) -> int:
        return int(math.floor(self.horizon - self.t_prime))

    def at(self, **changes) -> "AnalyticParams":
        return self.model_copy(update=changes)


def feasible_last_dispatch(p: AnalyticParams) -> bool:
    """The drone can reach b' and be back before the horizon."""
    return p.t_prime <= p.horizon - p.b_prime / p.c


def p_accept_one_more(p: AnalyticParams) -> float:
    """Probability of at least one further delivery after serving b' now."""
    if not feasible_last_dispatch(p):
        raise InfeasibleParamsError(
            f"Request at distance {p.b_prime} cannot be served at t'={p.t_prime}"
        )
    q = math.ceil(p.b_prime / p.c)
    left = p.horizon - p.t_prime
    exponent = p.c * p.mu * (left - q) * (left + q - 1) / (2 * p.d_max)
    return float(min(max(1.0 - math.exp(-exponent), 0.0), 1.0))


def p_reject_two(p: AnalyticParams) -> float:
    """
    Probability of at least two deliveries after denying the current request.

    Summation indices are integers; b' does not enter the expression.
    """
    c, mu, d, big_t, t = p.c, p.mu, p.d_max, p.horizon, p.t_prime
    remaining = p.remaining

    total = 1.0 - math.exp(-c * mu * (big_t - t) * (big_t - t - 1) / (2 * d))
    for k in range(1, remaining + 1):
        outer = math.exp(-k * c * mu * (2 * big_t - 2 * t + k - 1) / (2 * d))
        m = np.arange(1, math.floor(c * (big_t - t - k)) + 1)
        if not m.size:
            continue
        q = np.ceil(m / c)
        bracket = (
            2 * d
            + c * k
            + c * k**2
            - c * big_t
            - 2 * c * k * big_t
            + c * big_t**2
            + c * t
            + 2 * c * k * t
            - 2 * c * big_t * t
            + c * t**2
            + c * q
            - c * q**2
        )
        total -= outer * float(np.sum(mu / d * np.exp(-mu / (2 * d) * bracket)))
    return float(min(max(total, 0.0), 1.0))


def _accept_probability(p: AnalyticParams) -> float:
    return p_accept_one_more(p) if feasible_last_dispatch(p) else 0.0


def b_grid(d_max: float, step: float) -> list[float]:
    # rounding keeps ceil(b'/c) stable on exact grid points
    return [round(i * step, 10) for i in range(int(math.floor(d_max / step + 1e-9)) + 1)]


def b_star(p: AnalyticParams, step: float = 0.1) -> float:
    """
    Largest b' on the grid before accepting falls below denying.

    Returns ALWAYS_ACCEPT when accepting is at least as good everywhere.
    """
    reject = p_reject_two(p)
    previous = None
    for b in b_grid(p.d_max, step):
        if _accept_probability(p.at(b_prime=b)) < reject:
            if previous is None:
                logger.warning(f"Denying beats accepting even at b'=0 (t'={p.t_prime})")
                return 0.0
            return previous
        previous = b
    return ALWAYS_ACCEPT


def _deliveries(rng, slots: int, busy_until: int, p: AnalyticParams, needed: int) -> int:
    counts = rng.poisson(p.mu, size=slots)
    distances = rng.uniform(0.0, p.d_max, size=int(counts.sum()))
    queue = deque()
    cursor = 0
    served = 0
    for slot in range(1, slots + 1):
        queue.extend(distances[cursor : cursor + counts[slot - 1]])
        cursor += counts[slot - 1]
        if busy_until > slot:
            continue
        reach = p.c * (slots - slot)
        # requests out of reach now stay out of reach, so drop them
        while queue:
            distance = queue.popleft()
            if distance <= reach:
                served += 1
                if served >= needed:
                    return served
                busy_until = slot + math.ceil(distance / p.c)
                break
    return served


@dataclass(frozen=True)
class MonteCarloEstimate:
    estimate: float
    stderr: float
    trials: int


def mc_oracle(
    p: AnalyticParams, scenario: Scenario, trials: int, seed: int
) -> MonteCarloEstimate:
    """
    Simulate the simplified single-drone world.

    Per time unit, Poisson(mu) requests arrive with uniform distances on
    [0, d_max]. At the end of each unit an idle drone takes the oldest
    queued request it can still serve before the horizon and is busy for
    ceil(distance / c) units. "accept_one_more" starts busy with b'
    and succeeds on one delivery; "reject_two" starts idle and needs two.
    """
    if trials <= 0:
        raise ValueError("trials must be positive")
    rng = np.random.default_rng(seed)
    slots = p.remaining
    if scenario == "accept_one_more":
        busy, needed = math.ceil(p.b_prime / p.c), 1
    else:
        busy, needed = 0, 2

    hits = sum(_deliveries(rng, slots, busy, p, needed) >= needed for _ in range(trials))
    estimate = hits / trials
    stderr = math.sqrt(estimate * (1 - estimate) / trials)
    return MonteCarloEstimate(estimate, stderr, trials)


def figure_grid(
    base: AnalyticParams, t_primes: Iterable[float], b_primes: Iterable[float]
) -> list[AnalyticParams]:
    b_primes = list(b_primes)
    return [base.at(t_prime=t, b_prime=b) for t in t_primes for b in b_primes]


def curves_frame(grid: Iterable[AnalyticParams]) -> pd.DataFrame:
    reject_cache = {}
    rows = []
    for p in grid:
        if p.t_prime not in reject_cache:
            reject_cache[p.t_prime] = p_reject_two(p)
        rows.append((p.t_prime, p.b_prime, _accept_probability(p), reject_cache[p.t_prime]))
    return pd.DataFrame(rows, columns=CURVE_COLUMNS)


def emit_curves(grid: Iterable[AnalyticParams], target: str | Path) -> Path:
    target = Path(target)
    target.parent.mkdir(parents=True, exist_ok=True)
    curves_frame(grid).to_csv(target, index=False)
    return target


def oracle_frame(grid: Iterable[AnalyticParams], trials: int, seed: int) -> pd.DataFrame:
    """
    Closed forms next to simulation estimates over a grid.

    A row agrees when the gap is within max(0.02, 3 standard errors).
    Infeasible (t', b') points are skipped for the accept scenario.
    """
    rows = []
    rejected = set()
    for p in grid:
        checks = []
        if feasible_last_dispatch(p):
            checks.append(("accept_one_more", p_accept_one_more(p)))
        if p.t_prime not in rejected:
            rejected.add(p.t_prime)
            checks.append(("reject_two", p_reject_two(p)))
        for scenario, closed in checks:
            mc = mc_oracle(p, scenario, trials, seed)
            agrees = abs(closed - mc.estimate) <= max(0.02, 3 * mc.stderr)
            rows.append((p.t_prime, p.b_prime, scenario, closed, mc.estimate, mc.stderr, agrees))
    frame = pd.DataFrame(rows, columns=ORACLE_COLUMNS)
    if len(frame) and not frame["agrees"].all():
        disagreeing = frame.loc[~frame["agrees"], "scenario"].value_counts().to_dict()
        logger.warning(f"Closed forms disagree with simulation: {disagreeing}")
    return frame
