"""
Fully actuated mechanical systems in port-Hamiltonian form.

A system is described by its inertia matrix ``M(q)`` and potential ``V(q)``;
the Hamiltonian is ``H(q, p) = 1/2 p^T M^{-1}(q) p + V(q)`` and the open-loop
dynamics are ``qdot = dH/dp``, ``pdot = -dH/dq + u``.

The module also ships the reduced three-joint PERA arm (shoulder pitch,
shoulder yaw, elbow pitch) and the finite-difference helpers used as
derivative oracles elsewhere in the package.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Callable, Optional

import numpy as np


class ModelError(ValueError):
    """Raised for invalid model evaluations (singular inertia, bad input)."""


def _as_finite(x, name: str, n: Optional[int] = None) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if n is not None and arr.shape != (n,):
        raise ModelError(f"{name} must have shape ({n},), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ModelError(f"{name} has non-finite entries: {arr}")
    return arr


def fd_step(x: float, rel: float = 1e-6) -> float:
    """Central-difference step ``rel * max(1, |x|)``."""
    return rel * max(1.0, abs(x))


def fd_gradient(f: Callable[[np.ndarray], float], q, h: Optional[float] = None) -> np.ndarray:
    """Central-difference gradient of a scalar field.

    Parameters
    ----------
    f : callable
        Scalar field ``q -> float``.
    q : array_like
        Evaluation point.
    h : float, optional
        Fixed step. By default each coordinate uses ``1e-6 * max(1, |q_k|)``.
    """
    q = np.asarray(q, dtype=float)
    grad = np.empty_like(q)
    for k in range(q.size):
        hk = fd_step(q[k]) if h is None else h
        qp = q.copy()
        qm = q.copy()
        qp[k] += hk
        qm[k] -= hk
        fp, fm = f(qp), f(qm)
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise ModelError(f"non-finite function value near q={q} (coordinate {k})")
        grad[k] = (fp - fm) / (2.0 * hk)
    return grad


def fd_jacobian(F: Callable[[np.ndarray], np.ndarray], q, h: Optional[float] = None) -> np.ndarray:
    """Central-difference derivative of an array-valued map.

    Returns an array of shape ``(n,) + F(q).shape`` whose ``k``-th slice is
    ``dF/dq_k``.
    """
    q = np.asarray(q, dtype=float)
    out = []
    for k in range(q.size):
        hk = fd_step(q[k]) if h is None else h
        qp = q.copy()
        qm = q.copy()
        qp[k] += hk
        qm[k] -= hk
        out.append((np.asarray(F(qp)) - np.asarray(F(qm))) / (2.0 * hk))
    return np.array(out)


@dataclass(frozen=True)
class MechModel:
    """Evaluatable description of an n-DoF mechanical system.

    ``mass_matrix_derivative``, when given, returns an ``(n, n, n)`` array
    whose ``k``-th slice is ``dM/dq_k``. Without it the simulator falls back
    to finite differences for the kinetic-energy gradient.
    """

    n: int
    mass_matrix: Callable[[np.ndarray], np.ndarray]
    potential: Callable[[np.ndarray], float]
    grad_potential: Optional[Callable[[np.ndarray], np.ndarray]] = None
    mass_matrix_derivative: Optional[Callable[[np.ndarray], np.ndarray]] = None
    name: str = "model"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ModelError(f"n must be a positive integer, got {self.n}")

    def M(self, q) -> np.ndarray:
        return np.asarray(self.mass_matrix(q), dtype=float)

    def V(self, q) -> float:
        return float(self.potential(q))

    def dV(self, q) -> np.ndarray:
        """Gradient of the potential (analytic when available)."""
        if self.grad_potential is not None:
            return np.asarray(self.grad_potential(q), dtype=float)
        return fd_gradient(self.potential, q)

    def dM(self, q) -> np.ndarray:
        """``(n, n, n)`` stack of ``dM/dq_k``."""
        if self.mass_matrix_derivative is not None:
            return np.asarray(self.mass_matrix_derivative(q), dtype=float)
        return fd_jacobian(self.mass_matrix, q)

    def kinetic_gradient(self, q, p) -> np.ndarray:
        """Configuration gradient of ``1/2 p^T M^{-1}(q) p`` at fixed ``p``."""
        q = np.asarray(q, dtype=float)
        p = np.asarray(p, dtype=float)
        if self.mass_matrix_derivative is not None:
            v = _solve(self.M(q), p, q)
            # d(M^-1)/dq_k = -M^-1 dM_k M^-1
            return -0.5 * np.einsum("i,kij,j->k", v, self.dM(q), v)

        def minv(x):
            return np.linalg.inv(self.M(x))

        dminv = fd_jacobian(minv, q)
        return 0.5 * np.einsum("i,kij,j->k", p, dminv, p)


@dataclass(frozen=True)
class PhState:
    """Generalized positions ``q`` (rad) and momenta ``p``."""

    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        q = _as_finite(self.q, "q")
        p = _as_finite(self.p, "p", q.size)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)


def _solve(M: np.ndarray, b: np.ndarray, q) -> np.ndarray:
    try:
        return np.linalg.solve(M, b)
    except np.linalg.LinAlgError as exc:
        raise ModelError(f"singular mass matrix at q={np.asarray(q).tolist()}") from exc


def _check_state(model: MechModel, s: PhState):
    if s.q.size != model.n:
        raise ModelError(f"state has dimension {s.q.size}, model has n={model.n}")


def hamiltonian(model: MechModel, s: PhState) -> float:
    """Total energy ``1/2 p^T M^{-1} p + V(q)``."""
    _check_state(model, s)
    v = _solve(model.M(s.q), s.p, s.q)
    return 0.5 * float(s.p @ v) + model.V(s.q)


def open_loop_rhs(model: MechModel, s: PhState, u) -> tuple[np.ndarray, np.ndarray]:
    """Vector field of the actuated pH system.

    Returns ``(qdot, pdot)`` with ``qdot = M^{-1} p`` and
    ``pdot = -dV/dq - d/dq(1/2 p^T M^{-1} p) + u``.
    """
    _check_state(model, s)
    u = _as_finite(u, "u", model.n)
    return _rhs(model, s.q, s.p, u)


def _rhs(model: MechModel, q, p, u):
    # unchecked core shared with the simulator's inner loop
    qdot = _solve(model.M(q), p, q)
    pdot = u - model.dV(q) - model.kinetic_gradient(q, p)
    return qdot, pdot


# --------------------------------------------------------------------------
# PERA reduced model


@dataclass(frozen=True)
class PeraParams:
    """Physical constants of the 3-DoF PERA arm (SI units)."""

    g: float = 9.81
    L1: float = 0.32
    L2: float = 0.48
    m1: float = 2.9
    m2: float = 1.0
    I1: float = 0.03
    I2: float = 4e-3
    I3: float = 0.02

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not (np.isfinite(v) and v > 0):
                raise ModelError(f"PERA parameter {f.name} must be positive, got {v}")

    @property
    def a(self) -> float:
        return (self.m1 + self.m2) * self.L1**2

    @property
    def c1(self) -> float:
        """Shoulder gravity coefficient ``(m1/3 + m2) g L1``."""
        return (self.m1 / 3.0 + self.m2) * self.g * self.L1

    @property
    def c2(self) -> float:
        """Forearm gravity coefficient ``(1/3) m2 g L2``."""
        return self.m2 * self.g * self.L2 / 3.0

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def pera_model(params: Optional[PeraParams] = None) -> MechModel:
    """Reduced PERA arm: shoulder pitch ``q1``, shoulder yaw ``q2``, elbow ``q3``."""
    P = PeraParams() if params is None else params
    a, c1, c2 = P.a, P.c1, P.c2
    I1, I2, I3 = P.I1, P.I2, P.I3
    m22 = I2 + I3 + a

    def mass_matrix(q):
        s1, cs1 = np.sin(q[0]), np.cos(q[0])
        return np.array([
            [I1 + I2 + I3 + a * s1 * s1, 0.0, I3 * cs1],
            [0.0, m22, 0.0],
            [I3 * cs1, 0.0, I3],
        ])

    def mass_matrix_derivative(q):
        dM = np.zeros((3, 3, 3))
        dM[0, 0, 0] = a * np.sin(2.0 * q[0])
        dM[0, 0, 2] = dM[0, 2, 0] = -I3 * np.sin(q[0])
        return dM

    def potential(q):
        s1, cs1 = np.sin(q[0]), np.cos(q[0])
        b = np.cos(q[1]) * s1 * np.sin(q[2]) - cs1 * np.cos(q[2])
        return -c1 * cs1 + c2 * b

    def grad_potential(q):
        s1, cs1 = np.sin(q[0]), np.cos(q[0])
        s2, cs2 = np.sin(q[1]), np.cos(q[1])
        s3, cs3 = np.sin(q[2]), np.cos(q[2])
        return np.array([
            c1 * s1 + c2 * (cs2 * cs1 * s3 + s1 * cs3),
            -c2 * s2 * s1 * s3,
            c2 * (cs2 * s1 * cs3 + cs1 * s3),
        ])

    return MechModel(
        n=3,
        mass_matrix=mass_matrix,
        potential=potential,
        grad_potential=grad_potential,
        mass_matrix_derivative=mass_matrix_derivative,
        name="pera",
        params=P.as_dict(),
    )


# Per-axis motor torque limits of the PERA joints (N m).
PERA_TORQUE_LIMITS = np.array([18.77, 3.32, 7.72])


def constant_mass_model(M, grad=None, name: str = "constant-mass") -> MechModel:
    """Model with configuration-independent inertia and linear potential ``g.q``.

    Handy for checks where every curvature term must vanish.
    """
    M = np.array(M, dtype=float)
    n = M.shape[0]
    g = np.zeros(n) if grad is None else np.asarray(grad, dtype=float)
    return MechModel(
        n=n,
        mass_matrix=lambda q: M,
        potential=lambda q: float(g @ np.asarray(q)),
        grad_potential=lambda q: g.copy(),
        mass_matrix_derivative=lambda q: np.zeros((n, n, n)),
        name=name,
    )
