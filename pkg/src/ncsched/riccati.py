"""Steady-state LQG quantities for a single plant.

The control and filter Riccati equations are solved by iterating their
defining recursions to a fixed point.  The Lyapunov equation for a stable
open loop is solved directly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .model import PlantSpec

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITERS = 100_000


class NumericalError(ArithmeticError):
    pass


class NoConvergence(NumericalError):
    def __init__(self, what: str, iters: int):
        self.iters = iters
        super().__init__(f"{what} did not converge within {iters} iterations")


class SingularInnovation(NumericalError):
    pass


class UnstableA(NumericalError):
    pass


def sym(x: np.ndarray) -> np.ndarray:
    return (x + x.T) / 2


def spectral_radius(A: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(A))))


@dataclass(frozen=True, eq=False)
class SteadyState:
    S_inf: np.ndarray
    P_inf: np.ndarray
    K_inf: np.ndarray
    L_inf: np.ndarray
    Gamma_inf: np.ndarray
    Pi_inf: np.ndarray
    F_inf: np.ndarray
    Z_inf: Optional[np.ndarray]
    spectral_radius: float


def control_riccati_step(S, A, B, Q, R):
    """One backward step S_t = f(S_{t+1}); also returns L_t and Gamma_t."""
    H = B.T @ S @ B + R
    L = np.linalg.solve(H, B.T @ S @ A)
    S_prev = A.T @ S @ A + Q - (A.T @ S @ B) @ L
    return sym(S_prev), L, sym(L.T @ H @ L)


def kalman_gain(P_prior, C, V):
    """Gain K = P C^T (C P C^T + V)^-1 for a predicted covariance."""
    Sinn = C @ P_prior @ C.T + V
    try:
        return np.linalg.solve(Sinn.T, (P_prior @ C.T).T).T
    except np.linalg.LinAlgError:
        raise SingularInnovation("innovation covariance C P C^T + V is singular") from None


def filter_riccati_step(P_prior, A, C, W, V):
    """Return (next prior covariance, K_t, posterior covariance P_{t|t})."""
    K = kalman_gain(P_prior, C, V)
    P_post = sym((np.eye(A.shape[0]) - K @ C) @ P_prior)
    return sym(A @ P_post @ A.T + W), K, P_post


def innovation_cov(K, C, P_prior):
    """Covariance of K_t (y_t - C x_{t|t-1}), the noise driving the sensor/controller gap.

    Equals K (C P C^T + V) K^T = K C P_{t|t-1}.
    """
    return sym(K @ C @ P_prior)


def _iterate(step, X0, what, tol, max_iters):
    X = X0
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(max_iters):
            X_next = step(X)
            if not np.all(np.isfinite(X_next)):
                break
            delta = np.max(np.abs(X_next - X))
            X = X_next
            if delta <= tol * max(1.0, float(np.max(np.abs(X)))):
                return X
    raise NoConvergence(what, max_iters)


def solve_control_dare(plant: PlantSpec, tol: float = DEFAULT_TOL, max_iters: int = DEFAULT_MAX_ITERS) -> np.ndarray:
    """Iterate the LQR Riccati recursion backwards from S = Qf to its fixed point S_inf."""
    A, B, Q, R = plant.A, plant.B, plant.Q, plant.R
    S = _iterate(lambda S: control_riccati_step(S, A, B, Q, R)[0], sym(plant.Qf),
                 "control Riccati recursion", tol, max_iters)
    return sym(S)


def solve_filter_dare(plant: PlantSpec, tol: float = DEFAULT_TOL, max_iters: int = DEFAULT_MAX_ITERS):
    """Iterate the Kalman covariance recursion from P_{0|-1} = X0.

    Returns ``(P_inf, K_inf, Pi_inf, F_inf)`` where ``P_inf`` is the predicted
    (prior) covariance, ``F_inf = (I - K C) P_inf`` the posterior one and
    ``Pi_inf`` the steady innovation-injection covariance ``K C P_inf``.
    """
    A, C, W, V = plant.A, plant.C, plant.W, plant.V
    P = _iterate(lambda P: filter_riccati_step(P, A, C, W, V)[0], sym(plant.x0_cov),
                 "filter Riccati recursion", tol, max_iters)
    P = sym(P)
    K = kalman_gain(P, C, V)
    F = sym((np.eye(plant.n) - K @ C) @ P)
    return P, K, innovation_cov(K, C, P), F


def control_gain(plant: PlantSpec, S_inf: np.ndarray):
    """L = (B'SB + R)^-1 B'SA and Gamma = L'(B'SB + R)L."""
    B = plant.B
    H = B.T @ S_inf @ B + plant.R
    L = np.linalg.solve(H, B.T @ S_inf @ plant.A)
    return L, sym(L.T @ H @ L)


def solve_lyapunov(A: np.ndarray, Pi: np.ndarray) -> np.ndarray:
    """Solve A Z A^T - Z + Pi = 0 for a Schur-stable A."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    Pi = np.atleast_2d(np.asarray(Pi, dtype=float))
    rho = spectral_radius(A)
    if not rho < 1:
        raise UnstableA(f"spectral radius {rho:.6g} >= 1; the Lyapunov series diverges")
    return sym(scipy.linalg.solve_discrete_lyapunov(A, Pi))


def steady_state(plant: PlantSpec, tol: float = DEFAULT_TOL, max_iters: int = DEFAULT_MAX_ITERS) -> SteadyState:
    S = solve_control_dare(plant, tol, max_iters)
    P, K, Pi, F = solve_filter_dare(plant, tol, max_iters)
    L, Gamma = control_gain(plant, S)
    rho = spectral_radius(plant.A)
    Z = solve_lyapunov(plant.A, Pi) if rho < 1 else None
    return SteadyState(S_inf=S, P_inf=P, K_inf=K, L_inf=L, Gamma_inf=Gamma,
                       Pi_inf=Pi, F_inf=F, Z_inf=Z, spectral_radius=rho)
