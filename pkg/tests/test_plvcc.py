import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phtrack.controller import gain_profile
from phtrack.mech import MechModel, PhState, constant_mass_model, open_loop_rhs, pera_model
from phtrack.plvcc import (FactorizationError, factorize, gyroscopic_matrix, gyroscopic_matrix_desired,
                           lie_bracket, psi_factor, transform_momentum, transformed_rhs, untransform_momentum)
from phtrack.simulation import SimConfig, integrate, simulate
from phtrack.trajectory import circle_trajectory

angles = st.floats(-np.pi, np.pi, allow_nan=False)
configs = st.tuples(angles, angles, angles).map(np.array)
momenta = st.tuples(*[st.floats(-3, 3, allow_nan=False)] * 3).map(np.array)

PERA = pera_model()


def test_identity_mass():
    f = factorize(constant_mass_model(np.eye(3)), np.zeros(3))
    np.testing.assert_array_equal(f.psi, np.eye(3))
    np.testing.assert_array_equal(f.col_jacobians, 0.0)


def test_constant_diagonal_mass():
    f = factorize(constant_mass_model(np.diag([4.0, 9.0])), [0.7, -0.1])
    np.testing.assert_allclose(f.psi, np.diag([0.5, 1 / 3]), atol=1e-15)
    np.testing.assert_array_equal(f.col_jacobians, 0.0)


def test_pera_factor_at_zero():
    # explicit inverse of M(0) (block structure in joints 1 and 3)
    a = 3.9 * 0.32**2
    d = 0.054 * 0.02 - 0.02**2
    Minv = np.array([[0.02 / d, 0.0, -0.02 / d], [0.0, 1 / (0.024 + a), 0.0], [-0.02 / d, 0.0, 0.054 / d]])
    f = factorize(PERA, np.zeros(3))
    np.testing.assert_allclose(f.psi @ f.psi.T, Minv, rtol=1e-12)


def test_factor_convention_upper_triangular():
    rng = np.random.default_rng(3)
    for q in rng.uniform(-np.pi, np.pi, (100, 3)):
        f = factorize(PERA, q)
        np.testing.assert_array_equal(np.tril(f.psi, -1), 0.0)
        assert np.all(np.diag(f.psi) > 0)


def test_factorization_invariants():
    rng = np.random.default_rng(4)
    for q in rng.uniform(-np.pi, np.pi, (1000, 3)):
        f = factorize(PERA, q)
        Minv = np.linalg.inv(PERA.M(q))
        assert np.linalg.norm(f.psi @ f.psi.T - Minv) <= 1e-10 * np.linalg.norm(Minv)
        assert np.abs(f.psi @ f.psi_inv - np.eye(3)).max() <= 1e-10


def test_non_pd_mass_reports_eigenvalue():
    bad = MechModel(2, lambda q: np.array([[1.0, 0.0], [0.0, -2.0]]), lambda q: 0.0)
    with pytest.raises(FactorizationError, match="smallest eigenvalue -2"):
        factorize(bad, [0.0, 0.0])


def test_analytic_and_fd_jacobians_agree():
    rng = np.random.default_rng(5)
    for q in rng.uniform(-np.pi, np.pi, (200, 3)):
        a = factorize(PERA, q, method="analytic").dpsi
        b = factorize(PERA, q, method="fd").dpsi
        np.testing.assert_allclose(a, b, atol=1e-7)


def test_unknown_method():
    with pytest.raises(ValueError):
        factorize(PERA, np.zeros(3), method="symbolic")


def test_transform_examples():
    f = factorize(PERA, [0.3, 0.2, -0.5])
    np.testing.assert_array_equal(transform_momentum(f, np.zeros(3)), 0.0)
    fi = factorize(constant_mass_model(np.eye(3)), np.zeros(3))
    p = np.array([0.1, -2.0, 3.0])
    np.testing.assert_array_equal(transform_momentum(fi, p), p)


@settings(max_examples=100, deadline=None)
@given(configs, momenta)
def test_transform_round_trip_and_kinetic_energy(q, p):
    f = factorize(PERA, q)
    P = transform_momentum(f, p)
    np.testing.assert_allclose(untransform_momentum(f, P), p, atol=1e-10 * (1 + np.abs(p).max()))
    ke = 0.5 * p @ np.linalg.solve(PERA.M(q), p)
    assert 0.5 * P @ P == pytest.approx(ke, rel=1e-10, abs=1e-12)


def test_bracket_examples():
    f = factorize(PERA, [0.4, -0.2, 1.1])
    for i in range(3):
        np.testing.assert_array_equal(lie_bracket(f, i, i), 0.0)
    fc = factorize(constant_mass_model(np.diag([2.0, 3.0, 5.0])), np.zeros(3))
    np.testing.assert_array_equal(lie_bracket(fc, 0, 2), 0.0)
    with pytest.raises(IndexError):
        lie_bracket(f, 0, 3)


def test_bracket_antisymmetry():
    rng = np.random.default_rng(6)
    for q in rng.uniform(-np.pi, np.pi, (1000, 3)):
        for method in ("analytic", "fd"):
            f = factorize(PERA, q, method=method)
            np.testing.assert_allclose(lie_bracket(f, 0, 2), -lie_bracket(f, 2, 0), atol=1e-8)


def test_brackets_match_definition():
    # (dPsi_j/dq) Psi_i - (dPsi_i/dq) Psi_j with column Jacobians by direct differencing of Psi
    q = np.array([0.7, 0.3, -1.2])
    h = 1e-6
    cols = []
    for k in range(3):
        D = np.empty((3, 3))
        for l in range(3):
            e = np.zeros(3)
            e[l] = h
            D[:, l] = (psi_factor(PERA, q + e)[0][:, k] - psi_factor(PERA, q - e)[0][:, k]) / (2 * h)
        cols.append(D)
    psi = psi_factor(PERA, q)[0]
    f = factorize(PERA, q)
    for i in range(3):
        for j in range(3):
            expect = cols[j] @ psi[:, i] - cols[i] @ psi[:, j]
            np.testing.assert_allclose(lie_bracket(f, i, j), expect, atol=1e-8)


def test_gyroscopic_examples():
    f = factorize(PERA, [0.5, 0.1, 0.2])
    np.testing.assert_array_equal(gyroscopic_matrix(f, np.zeros(3)), 0.0)
    fc = factorize(constant_mass_model(np.diag([2.0, 3.0, 5.0])), np.zeros(3))
    np.testing.assert_array_equal(gyroscopic_matrix(fc, [1.0, 2.0, 3.0]), 0.0)


@settings(max_examples=200, deadline=None)
@given(configs, momenta)
def test_gyroscopic_skew(q, P):
    J = gyroscopic_matrix(factorize(PERA, q), P)
    assert np.linalg.norm(J + J.T) <= 1e-6 * (1 + np.linalg.norm(P))
    assert abs(P @ J @ P) <= 1e-8


def test_gyroscopic_skew_fd_route():
    rng = np.random.default_rng(7)
    for _ in range(200):
        q, P = rng.uniform(-np.pi, np.pi, 3), rng.normal(size=3)
        J = gyroscopic_matrix(factorize(PERA, q, method="fd"), P)
        assert np.linalg.norm(J + J.T) <= 1e-6 * (1 + np.linalg.norm(P))


def test_desired_gyroscopic_examples():
    q_d = np.array([0.4, 0.3, 1.0])
    np.testing.assert_array_equal(gyroscopic_matrix_desired(PERA, q_d, np.zeros(3)), 0.0)
    cm = constant_mass_model(np.diag([2.0, 3.0, 5.0]))
    np.testing.assert_array_equal(gyroscopic_matrix_desired(cm, q_d, [1.0, 1.0, 1.0]), 0.0)


@settings(max_examples=100, deadline=None)
@given(configs, momenta)
def test_desired_gyroscopic_consistency(q_d, qd_dot):
    f = factorize(PERA, q_d)
    J_d = gyroscopic_matrix_desired(PERA, q_d, qd_dot)
    np.testing.assert_allclose(J_d, -J_d.T, atol=1e-6)
    np.testing.assert_allclose(J_d, gyroscopic_matrix(f, f.psi_inv @ qd_dot), atol=1e-6)


def test_transformed_rhs_equilibrium():
    q = np.array([0.3, -0.4, 0.9])
    qdot, Pdot = transformed_rhs(PERA, q, np.zeros(3), PERA.dV(q))
    np.testing.assert_array_equal(qdot, 0.0)
    np.testing.assert_allclose(Pdot, 0.0, atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(configs, momenta, momenta)
def test_transformed_energy_balance(q, P, u):
    f = factorize(PERA, q)
    qdot, Pdot = transformed_rhs(PERA, q, P, u, frame=f)
    # d/dt (P.P/2 + V) = (Psi^T u) . P
    assert P @ Pdot + PERA.dV(q) @ qdot == pytest.approx((f.psi.T @ u) @ P, abs=1e-9)


def test_transformed_matches_momentum_coordinates():
    rng = np.random.default_rng(8)
    q0, p0 = rng.uniform(-1, 1, 3), rng.normal(scale=0.1, size=3)

    def u(t):
        return np.array([np.sin(t), 0.5 * np.cos(2 * t), -0.3])

    def rhs_p(t, y):
        return np.concatenate(open_loop_rhs(PERA, PhState(y[:3], y[3:]), u(t)))

    def rhs_P(t, y):
        return np.concatenate(transformed_rhs(PERA, y[:3], y[3:], u(t)))

    P0 = transform_momentum(factorize(PERA, q0), p0)
    _, Yp = integrate(rhs_p, np.concatenate([q0, p0]), 1.0, 1e-3)
    _, YP = integrate(rhs_P, np.concatenate([q0, P0]), 1.0, 1e-3)
    np.testing.assert_allclose(YP[-1, :3], Yp[-1, :3], atol=1e-6)
    f = factorize(PERA, Yp[-1, :3])
    np.testing.assert_allclose(YP[-1, 3:], transform_momentum(f, Yp[-1, 3:]), atol=1e-6)


def test_psi_rates_bounded_along_trajectory():
    # finite-difference dPsi/dt and dPsi^{-1}/dt stay bounded while q does
    m, g = PERA, gain_profile("pera-sim")
    tr = simulate(m, g, circle_trajectory(), SimConfig(dt=1e-3, t_end=4.0))
    psis = [psi_factor(m, q) for q in tr.q]
    dt = np.diff(tr.t)[:, None, None]
    dpsi = np.diff(np.array([p for p, _ in psis]), axis=0) / dt
    dpsi_inv = np.diff(np.array([pi for _, pi in psis]), axis=0) / dt
    assert np.isfinite(dpsi).all() and np.isfinite(dpsi_inv).all()
    assert np.linalg.norm(dpsi, ord=2, axis=(1, 2)).max() < 1e3
    assert np.linalg.norm(dpsi_inv, ord=2, axis=(1, 2)).max() < 1e3
