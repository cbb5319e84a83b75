"""Monte Carlo closed-loop simulation of the scheduled LQG architecture.

Every run draws its initial state and noise from its own Philox substreams
keyed by ``(run, plant, source)``; the draw for time ``t`` is the ``t``-th
vector of that stream.  Runs are propagated in fixed-size batches (a short final batch is padded),
so a run's trajectory does not depend on how many runs are requested.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Optional, Sequence

import numpy as np

from .model import Instance, PlantSpec, Schedule, validate_schedule
from .riccati import SteadyState, innovation_cov, kalman_gain, sym
from .analysis import transient_control, transient_filter

BATCH = 64
_SOURCES = {"x0": 0, "w": 1, "v": 2}


@dataclass(frozen=True)
class SimConfig:
    horizon: int
    runs: int
    seed: int = 2022
    gains: Literal["steady", "transient"] = "steady"

    def __post_init__(self):
        if self.horizon < 1 or self.runs < 1:
            raise ValueError("horizon and runs must be >= 1")
        if self.gains not in ("steady", "transient"):
            raise ValueError(f"unknown gains mode {self.gains!r}")


@dataclass(frozen=True)
class SimResult:
    per_plant_avg_loss: tuple[float, ...]
    total_avg_loss: float
    stderr: tuple[float, ...]
    gap_trace: Optional[dict] = field(default=None, compare=False, repr=False)


def noise_factor(cov: np.ndarray) -> np.ndarray:
    """F with F F^T = cov; Cholesky, or eigen-decomposition for singular PSD cov."""
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        lam, U = np.linalg.eigh(sym(cov))
        return U * np.sqrt(np.clip(lam, 0.0, None))


def substream(seed: int, run: int, plant: int, source: str) -> np.random.Generator:
    ss = np.random.SeedSequence(seed, spawn_key=(run, plant, _SOURCES[source]))
    return np.random.Generator(np.random.Philox(ss))


def kalman_update(plant: PlantSpec, pred_mean, pred_cov, y, K=None):
    """Measurement update; ``pred_mean``/``y`` may carry a leading batch axis."""
    C = plant.C
    if K is None:
        K = kalman_gain(pred_cov, C, plant.V)
    post_mean = pred_mean + (y - pred_mean @ C.T) @ K.T
    post_cov = sym((np.eye(plant.n) - K @ C) @ pred_cov)
    return post_mean, post_cov, K, innovation_cov(K, C, pred_cov)


def kalman_step(plant: PlantSpec, prev_mean, prev_cov, u_prev, y):
    """Sensor-side Kalman filter: predict from x_{t-1|t-1} and u_{t-1}, then update on y_t.

    Returns ``(x_{t|t}, P_{t|t}, K_t, Pi_t)`` with Pi_t = K_t C P_{t|t-1}.
    """
    pred_mean = prev_mean @ plant.A.T + u_prev @ plant.B.T
    pred_cov = sym(plant.A @ prev_cov @ plant.A.T + plant.W)
    return kalman_update(plant, pred_mean, pred_cov, y)


def controller_estimator_step(plant: PlantSpec, prev_c_mean, u_prev, sensor_mean=None):
    """Controller-side estimate: open-loop prediction, overwritten when the sensor estimate arrives."""
    if sensor_mean is not None:
        return sensor_mean
    return prev_c_mean @ plant.A.T + u_prev @ plant.B.T


def _simulate_batch(plant, row, runs, T, seed, Ks, Ls, trace):
    n, m, p = plant.n, plant.m, plant.p
    # pad to a full batch so every run sees identical array shapes (and BLAS paths)
    live = len(runs)
    runs = list(runs) + [runs[0]] * (BATCH - live)
    R = BATCH
    A, B, C, Q, Qf, Rw = plant.A, plant.B, plant.C, plant.Q, plant.Qf, plant.R
    fx0, fw, fv = noise_factor(plant.x0_cov), noise_factor(plant.W), noise_factor(plant.V)
    x = np.empty((R, n))
    w = np.empty((R, T, n))
    v = np.empty((R, T, p))
    for k, r in enumerate(runs):
        x[k] = plant.x0_mean + substream(seed, r, plant.id, "x0").standard_normal(n) @ fx0.T
        w[k] = substream(seed, r, plant.id, "w").standard_normal((T, n)) @ fw.T
        v[k] = substream(seed, r, plant.id, "v").standard_normal((T, p)) @ fv.T

    cost = np.zeros(R, dtype=np.longdouble)
    xs = np.broadcast_to(plant.x0_mean, (R, n)).copy()  # sensor prediction x_{0|-1}
    xc = xs.copy()
    u = np.zeros((R, m))
    gaps = np.empty((R, T, n)) if trace else None
    T0 = len(row)
    for t in range(T):
        y = x @ C.T + v[:, t]
        if t > 0:
            xs_pred = xs @ A.T + u @ B.T
        else:
            xs_pred = xs
        K = Ks(t)
        xs = xs_pred + (y - xs_pred @ C.T) @ K.T
        if t > 0:
            xc = controller_estimator_step(plant, xc, u, xs if row[t % T0] else None)
        elif row[0]:
            xc = xs
        if trace:
            gaps[:, t] = xs - xc
        u = -(xc @ Ls(t).T)
        cost += np.einsum("ri,ij,rj->r", x, Q, x) + np.einsum("ri,ij,rj->r", u, Rw, u)
        x = x @ A.T + u @ B.T + w[:, t]
    cost += np.einsum("ri,ij,rj->r", x, Qf, x)
    return (cost / T)[:live], (gaps[:live] if trace else None)


def run_closed_loop(instance: Instance, sched: Schedule, steady: Sequence[SteadyState],
                    cfg: SimConfig, trace: bool = False) -> SimResult:
    """Simulate every plant ``cfg.runs`` times over ``cfg.horizon`` slots.

    Returns the per-plant mean of (realized loss)/T with its standard error.
    With ``trace=True`` the estimate gap x^s - x^c of every run and slot is
    kept in ``gap_trace[plant]`` (shape runs x T x n).
    """
    validate_schedule(instance, sched)
    T = cfg.horizon
    means, errs, traces = [], [], {}
    for plant, ss in zip(instance.plants, steady):
        if cfg.gains == "steady":
            Ks = lambda t, K=ss.K_inf: K  # noqa: E731
            Ls = lambda t, L=ss.L_inf: L  # noqa: E731
        else:
            filt = transient_filter(plant, T)
            ctrl = transient_control(plant, T)
            Ks = filt.K.__getitem__
            Ls = ctrl.L.__getitem__
        per_run = []
        plant_gaps = []
        for start in range(0, cfg.runs, BATCH):
            runs = range(start, min(start + BATCH, cfg.runs))
            costs, gaps = _simulate_batch(plant, sched.alloc[plant.id], runs, T, cfg.seed, Ks, Ls, trace)
            per_run.extend(float(c) for c in costs)
            if trace:
                plant_gaps.append(gaps)
        mean = math.fsum(per_run) / cfg.runs
        if cfg.runs > 1:
            var = math.fsum((c - mean) ** 2 for c in per_run) / (cfg.runs - 1)
            err = math.sqrt(var / cfg.runs)
        else:
            err = 0.0
        means.append(mean)
        errs.append(err)
        if trace:
            traces[plant.id] = np.concatenate(plant_gaps)
    return SimResult(tuple(means), math.fsum(means), tuple(errs), traces if trace else None)
