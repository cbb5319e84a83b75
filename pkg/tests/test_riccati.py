import math

import numpy as np
import pytest
import scipy.linalg

from ncsched.analysis import transient_control
from ncsched.model import PlantSpec, random_instance
from ncsched.riccati import (
    NoConvergence, UnstableA, control_gain, control_riccati_step, filter_riccati_step,
    solve_control_dare, solve_filter_dare, solve_lyapunov, spectral_radius, steady_state,
)

from conftest import scalar_plant

# positive root of S^2 - 0.25 S - 1 = 0
S_SCALAR = (0.25 + math.sqrt(0.0625 + 4.0)) / 2
L_SCALAR = 0.265564437074637413091653307576  # S a / (S + 1), mpmath 30 digits
GAMMA_SCALAR = 0.150413336097010970090630009659  # L^2 (S + 1)


def random_plants():
    plants = []
    for seed, dims in [(1, (2, 1, 1)), (4, (2, 1, 1)), (7, (4, 3, 2)), (11, (3, 2, 2)), (42, (2, 1, 1))]:
        plants.extend(random_instance(3, 1, *dims, seed=seed).plants)
    return plants


def dual(plant: PlantSpec) -> PlantSpec:
    return PlantSpec.build(A=plant.A.T, B=plant.C.T, C=plant.B.T, Q=plant.W, R=plant.V, W=plant.Q, V=plant.R)


def test_scalar_control_dare_matches_quadratic_root():
    S = solve_control_dare(scalar_plant())
    assert S[0, 0] == pytest.approx(S_SCALAR, abs=1e-9)


def test_zero_A_gives_S_equals_Q():
    p = PlantSpec.build(A=np.zeros((2, 2)), B=[[1.0], [2.0]], C=[[1.0, 0.0]], Q=[[2, 1], [1, 3]],
                        R=[[0.5]], W=np.eye(2), V=[[1.0]])
    assert np.allclose(solve_control_dare(p), p.Q, atol=1e-12)


def test_uncontrollable_marginal_mode_does_not_converge():
    with pytest.raises(NoConvergence):
        solve_control_dare(scalar_plant(a=1.0, b=0.0), max_iters=10_000)


def test_zero_A_filter_one_step():
    p = PlantSpec.build(A=np.zeros((2, 2)), B=[[1.0], [0.0]], C=[[1.0, 2.0]], Q=np.eye(2),
                        R=[[1.0]], W=[[2, 0.5], [0.5, 1]], V=[[0.7]])
    P, K, Pi, F = solve_filter_dare(p)
    assert np.allclose(P, p.W, atol=1e-12)
    K_ref = p.W @ p.C.T @ np.linalg.inv(p.C @ p.W @ p.C.T + p.V)
    assert np.allclose(K, K_ref, atol=1e-12)


def test_scalar_filter_dare_matches_quadratic_root():
    P, K, Pi, F = solve_filter_dare(scalar_plant())
    assert P[0, 0] == pytest.approx(S_SCALAR, abs=1e-9)
    assert K[0, 0] == pytest.approx(S_SCALAR / (S_SCALAR + 1), abs=1e-9)
    assert F[0, 0] == pytest.approx(S_SCALAR / (S_SCALAR + 1), abs=1e-9)
    # innovation injection K (C P C' + V) K' = K C P_prior
    assert Pi[0, 0] == pytest.approx(S_SCALAR ** 2 / (S_SCALAR + 1), abs=1e-9)


def test_unobservable_unstable_filter_does_not_converge():
    with pytest.raises(NoConvergence):
        solve_filter_dare(scalar_plant(a=2.0, c=0.0))


def test_scalar_control_gain():
    p = scalar_plant()
    L, G = control_gain(p, solve_control_dare(p))
    assert L[0, 0] == pytest.approx(L_SCALAR, abs=1e-9)
    assert G[0, 0] == pytest.approx(GAMMA_SCALAR, abs=1e-9)


def test_zero_A_gain_vanishes():
    p = scalar_plant(a=0.0)
    L, G = control_gain(p, solve_control_dare(p))
    assert L[0, 0] == 0.0 and G[0, 0] == 0.0


def truncated_series(A, Pi, eps=1e-12):
    Z = np.zeros_like(Pi)
    term = Pi.copy()
    Aj = np.eye(A.shape[0])
    while True:
        Z = Z + term
        Aj = Aj @ A
        term = Aj @ Pi @ Aj.T
        if np.linalg.norm(Aj, 2) < 1e-10 and np.max(np.abs(term)) < eps:
            return Z


def test_scalar_lyapunov_geometric_series():
    Z = solve_lyapunov([[0.5]], [[1.0]])
    assert Z[0, 0] == pytest.approx(truncated_series(np.array([[0.5]]), np.array([[1.0]]))[0, 0], abs=1e-12)
    assert Z[0, 0] == pytest.approx(4 / 3, abs=1e-12)


def test_lyapunov_zero_injection():
    assert np.array_equal(solve_lyapunov(np.diag([0.3, -0.2]), np.zeros((2, 2))), np.zeros((2, 2)))


def test_lyapunov_rejects_unstable():
    with pytest.raises(UnstableA):
        solve_lyapunov([[1.0]], [[1.0]])


def test_lyapunov_matches_series_on_random_stable_matrices(rng):
    for _ in range(20):
        n = rng.integers(1, 5)
        A = rng.normal(size=(n, n))
        A *= rng.uniform(0.1, 0.95) / spectral_radius(A)
        X = rng.normal(size=(n, n))
        Pi = X @ X.T
        Z = solve_lyapunov(A, Pi)
        assert np.max(np.abs(Z - truncated_series(A, Pi))) <= 1e-8 * max(1.0, np.max(np.abs(Z)))
        assert np.max(np.abs(A @ Z @ A.T - Z + Pi)) <= 1e-9 * max(1.0, np.max(np.abs(Z)))


@pytest.mark.parametrize("plant", random_plants(), ids=lambda p: f"n{p.n}")
def test_fixed_point_residuals_and_definiteness(plant):
    tol = 1e-10
    ss = steady_state(plant, tol=tol)
    S = ss.S_inf
    res_S = control_riccati_step(S, plant.A, plant.B, plant.Q, plant.R)[0] - S
    res_P = filter_riccati_step(ss.P_inf, plant.A, plant.C, plant.W, plant.V)[0] - ss.P_inf
    assert np.max(np.abs(res_S)) <= 10 * tol * max(1.0, np.max(np.abs(S)))
    assert np.max(np.abs(res_P)) <= 10 * tol * max(1.0, np.max(np.abs(ss.P_inf)))
    assert np.linalg.eigvalsh(S).min() > 0
    assert np.linalg.eigvalsh(ss.P_inf).min() > 0
    for M in (ss.Gamma_inf, ss.Pi_inf, ss.F_inf):
        assert np.array_equal(M, M.T)
        assert np.linalg.eigvalsh(M).min() >= -1e-12 * max(1.0, np.max(np.abs(M)))
    if ss.Z_inf is not None:
        assert np.max(np.abs(plant.A @ ss.Z_inf @ plant.A.T - ss.Z_inf + ss.Pi_inf)) <= 1e-9 * max(1.0, np.max(np.abs(ss.Z_inf)))
    assert (ss.Z_inf is None) == (ss.spectral_radius >= 1)


@pytest.mark.parametrize("plant", random_plants(), ids=lambda p: f"n{p.n}")
def test_duality_filter_equals_dual_control(plant):
    P = solve_filter_dare(plant)[0]
    S_dual = solve_control_dare(dual(plant))
    assert np.max(np.abs(P - S_dual)) <= 1e-8 * max(1.0, np.max(np.abs(P)))


@pytest.mark.parametrize("plant", random_plants(), ids=lambda p: f"n{p.n}")
def test_agrees_with_scipy_schur_solver(plant):
    S = solve_control_dare(plant)
    S_ref = scipy.linalg.solve_discrete_are(plant.A, plant.B, plant.Q, plant.R)
    assert np.allclose(S, S_ref, rtol=1e-7, atol=1e-9)


def test_backward_iterates_stay_psd():
    for plant in random_plants()[:6]:
        ctrl = transient_control(plant, 200)
        for S in ctrl.S:
            assert np.linalg.eigvalsh(S).min() >= -1e-10
