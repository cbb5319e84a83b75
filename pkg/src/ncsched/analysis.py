"""Deterministic evaluation of periodic schedules.

Elapsed-time sequences, the sensor/controller estimate-gap covariance
recursion, the exact finite-horizon LQG loss and its infinite-horizon
time average.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .model import Instance, PlantSpec, Schedule
from .riccati import SteadyState, control_riccati_step, filter_riccati_step, innovation_cov, steady_state


class _Divergent:
    """Infinite average loss.  Orders above every real number and absorbs addition."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "DIVERGENT"

    __str__ = __repr__

    def __reduce__(self):
        return (_Divergent, ())

    def __eq__(self, other):
        return other is self

    def __hash__(self):
        return hash("DIVERGENT")

    def __lt__(self, other):
        return False

    def __le__(self, other):
        return other is self

    def __gt__(self, other):
        return other is not self

    def __ge__(self, other):
        return True

    def __add__(self, other):
        return self

    __radd__ = __add__


DIVERGENT = _Divergent()
LossValue = Union[float, _Divergent]


def is_divergent(x) -> bool:
    return x is DIVERGENT


def to_float(x: LossValue) -> float:
    return math.inf if x is DIVERGENT else float(x)


def from_float(x: float) -> LossValue:
    return DIVERGENT if math.isinf(x) else x


class Branch(str, enum.Enum):
    COVERED = "covered"
    STABLE_UNCOVERED = "stable-uncovered"
    UNSTABLE_UNCOVERED = "unstable-uncovered"


@dataclass(frozen=True)
class ElapsedTimes:
    tau: tuple[int, ...]
    preperiod: Optional[int]  # None when the plant is never scheduled


@dataclass(frozen=True, eq=False)
class SteadyCovSeq:
    sigma_bar: tuple[np.ndarray, ...]


@dataclass(frozen=True)
class PlantLoss:
    value: LossValue
    branch: Branch


@dataclass(frozen=True)
class LossReport:
    per_plant: tuple[PlantLoss, ...]
    total: LossValue

    @property
    def divergent(self) -> bool:
        return self.total is DIVERGENT


def elapsed_times(sched: Schedule, plant_idx: int, horizon: int) -> ElapsedTimes:
    T0 = sched.period
    if horizon < 2 * T0:
        raise ValueError(f"horizon must be at least 2*T0 = {2 * T0}")
    row = sched.alloc[plant_idx]
    tau = []
    prev = 0
    for t in range(horizon):
        prev = 0 if row[t % T0] else prev + 1
        tau.append(prev)
    if not any(row):
        return ElapsedTimes(tuple(tau), None)
    periodic = all(tau[t + T0] == tau[t] for t in range(horizon - T0))
    return ElapsedTimes(tuple(tau), 0 if periodic else T0)


def _gap_cov_row(row: Sequence[int], A: np.ndarray, Pi: np.ndarray) -> list[np.ndarray]:
    """Steady gap covariance over two periods, from zero, resetting on transmission."""
    n = A.shape[0]
    zero = np.zeros((n, n))
    out = []
    prev = zero
    for t in range(2 * len(row)):
        prev = zero if row[t % len(row)] else A @ prev @ A.T + Pi
        out.append(prev)
    return out


def steady_cov_sequence(sched: Schedule, plant: PlantSpec, ss: SteadyState) -> SteadyCovSeq:
    row = sched.alloc[plant.id]
    if not any(row):
        raise UncoveredPlant(f"plant {plant.id} is never scheduled")
    return SteadyCovSeq(tuple(_gap_cov_row(row, plant.A, ss.Pi_inf)))


class UncoveredPlant(ValueError):
    pass


def row_loss(row: Sequence[int], plant: PlantSpec, ss: SteadyState) -> tuple[LossValue, Branch]:
    """Average loss of one plant under the periodic row ``row``."""
    G = ss.Gamma_inf
    base = float(np.trace(ss.S_inf @ plant.W) + np.trace(ss.F_inf @ G))
    if any(row):
        T0 = len(row)
        gaps = _gap_cov_row(row, plant.A, ss.Pi_inf)
        extra = sum(float(np.trace(G @ gaps[t])) for t in range(T0, 2 * T0)) / T0
        return base + extra, Branch.COVERED
    if ss.Z_inf is not None:
        return base + float(np.trace(ss.Z_inf @ G)), Branch.STABLE_UNCOVERED
    return DIVERGENT, Branch.UNSTABLE_UNCOVERED


def average_loss_plant(sched: Schedule, plant: PlantSpec, ss: SteadyState) -> tuple[LossValue, Branch]:
    return row_loss(sched.alloc[plant.id], plant, ss)


def _total(values) -> LossValue:
    total = 0.0
    for v in values:
        if v is DIVERGENT:
            return DIVERGENT
        total += v
    return total


def average_loss_total(sched: Schedule, instance: Instance, ss_all: Sequence[SteadyState]) -> LossReport:
    per = tuple(PlantLoss(*average_loss_plant(sched, p, ss)) for p, ss in zip(instance.plants, ss_all))
    return LossReport(per, _total(pl.value for pl in per))


@dataclass(frozen=True, eq=False)
class TransientFilter:
    """Time-varying Kalman quantities for t = 0..T-1 starting from P_{0|-1} = X0."""

    P_prior: tuple[np.ndarray, ...]
    P_post: tuple[np.ndarray, ...]
    K: tuple[np.ndarray, ...]
    Pi: tuple[np.ndarray, ...]


def transient_filter(plant: PlantSpec, T: int) -> TransientFilter:
    P = plant.x0_cov
    pri, post, gains, pis = [], [], [], []
    for _ in range(T):
        P_next, K, P_post = filter_riccati_step(P, plant.A, plant.C, plant.W, plant.V)
        pri.append(P)
        post.append(P_post)
        gains.append(K)
        pis.append(innovation_cov(K, plant.C, P))
        P = P_next
    return TransientFilter(tuple(pri), tuple(post), tuple(gains), tuple(pis))


@dataclass(frozen=True, eq=False)
class TransientControl:
    """S_0..S_T with S_T = Qf, and L_t, Gamma_t for t = 0..T-1."""

    S: tuple[np.ndarray, ...]
    L: tuple[np.ndarray, ...]
    Gamma: tuple[np.ndarray, ...]


def transient_control(plant: PlantSpec, T: int) -> TransientControl:
    S = [None] * (T + 1)
    L = [None] * T
    G = [None] * T
    S[T] = plant.Qf
    for t in range(T - 1, -1, -1):
        S[t], L[t], G[t] = control_riccati_step(S[t + 1], plant.A, plant.B, plant.Q, plant.R)
    return TransientControl(tuple(S), tuple(L), tuple(G))


def gap_cov_transient(row: Sequence[int], A: np.ndarray, pis: Sequence[np.ndarray]) -> list[np.ndarray]:
    """Exact gap covariance Sigma_t, t < len(pis), driven by the time-varying injections."""
    n = A.shape[0]
    zero = np.zeros((n, n))
    out = []
    prev = zero
    for t, Pi in enumerate(pis):
        prev = zero if row[t % len(row)] else A @ prev @ A.T + Pi
        out.append(prev)
    return out


def finite_horizon_loss(sched: Schedule, plant: PlantSpec, T: int) -> float:
    """Minimum expected loss over t = 0..T (terminal weight Qf) under the schedule."""
    if T < 1:
        raise ValueError("horizon T must be >= 1")
    ctrl = transient_control(plant, T)
    filt = transient_filter(plant, T)
    gaps = gap_cov_transient(sched.alloc[plant.id], plant.A, filt.Pi)
    x0 = plant.x0_mean
    S0 = ctrl.S[0]
    J = float(x0 @ S0 @ x0) + float(np.trace(S0 @ plant.x0_cov))
    J += sum(float(np.trace(ctrl.S[t + 1] @ plant.W)) for t in range(T))
    J += sum(float(np.trace(filt.P_post[t] @ ctrl.Gamma[t])) for t in range(T))
    J += sum(float(np.trace(ctrl.Gamma[t] @ gaps[t])) for t in range(T))
    return J


class ScheduleEvaluator:
    """Caches steady states and per-plant row losses for repeated schedule evaluation.

    Row losses are stored as floats with ``math.inf`` for divergence; the
    total is summed in plant order so identical schedules give bit-identical
    totals regardless of which search produced them.
    """

    def __init__(self, instance: Instance, steady: Optional[Sequence[SteadyState]] = None):
        self.instance = instance
        self.steady = tuple(steady) if steady is not None else tuple(steady_state(p) for p in instance.plants)
        self._cache: list[dict[tuple[int, ...], float]] = [{} for _ in instance.plants]

    def plant_loss(self, i: int, row: tuple[int, ...]) -> float:
        cache = self._cache[i]
        v = cache.get(row)
        if v is None:
            v = to_float(row_loss(row, self.instance.plants[i], self.steady[i])[0])
            cache[row] = v
        return v

    def total_rows(self, rows: Sequence[tuple[int, ...]]) -> float:
        total = 0.0
        for i, row in enumerate(rows):
            total += self.plant_loss(i, row)
        return total

    def total(self, sched: Schedule) -> LossValue:
        return from_float(self.total_rows(sched.alloc))

    def report(self, sched: Schedule) -> LossReport:
        return average_loss_total(sched, self.instance, self.steady)
