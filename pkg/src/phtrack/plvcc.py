"""
Momentum change of coordinates ``P = Psi(q)^T p`` with ``Psi Psi^T = M^{-1}``.

In the new coordinates the kinetic energy becomes ``1/2 P^T P`` and the
Coriolis forces show up as a skew-symmetric gyroscopic matrix ``J(q, P)``
built from Lie brackets of the columns of ``Psi``.

The factor is fixed as ``Psi = L^{-T}`` where ``M = L L^T`` is the lower
Cholesky factorization, so ``Psi`` is upper triangular with positive diagonal
and ``Psi^{-1} = L^T`` needs no explicit inverse.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import solve_triangular

from .mech import MechModel, ModelError, fd_step


class FactorizationError(ModelError):
    """Inertia matrix is not positive definite at the requested point."""


def _cholesky(model: MechModel, q) -> np.ndarray:
    M = model.M(q)
    try:
        return np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        lam = np.linalg.eigvalsh(0.5 * (M + M.T)).min()
        raise FactorizationError(
            f"mass matrix not positive definite at q={np.asarray(q).tolist()} "
            f"(smallest eigenvalue {lam:.3e})"
        ) from None


def _psi_from_chol(L: np.ndarray) -> np.ndarray:
    return solve_triangular(L, _eye(L.shape[0]), lower=True, check_finite=False).T


_EYES: dict[int, np.ndarray] = {}
_MASKS: dict[int, np.ndarray] = {}


def _eye(n: int) -> np.ndarray:
    if n not in _EYES:
        _EYES[n] = np.eye(n)
        _EYES[n].flags.writeable = False
    return _EYES[n]


def _tril_mask(n: int) -> np.ndarray:
    # lower triangle with halved diagonal
    if n not in _MASKS:
        _MASKS[n] = np.tril(np.ones((n, n)), -1) + 0.5 * np.eye(n)
    return _MASKS[n]


@dataclass(frozen=True)
class PlvccFrame:
    """Factor of the inverse inertia and its first derivatives at ``q``.

    ``dpsi[l]`` holds ``dPsi/dq_l``; ``col_jacobians[k]`` is the Jacobian of
    the ``k``-th column of ``Psi`` viewed as a vector field.
    """

    q: np.ndarray
    psi: np.ndarray
    psi_inv: np.ndarray
    dpsi: np.ndarray

    @property
    def n(self) -> int:
        return self.q.size

    @property
    def col_jacobians(self) -> np.ndarray:
        # col_jacobians[k, i, l] = d psi[i, k] / d q_l
        return self.dpsi.transpose(2, 1, 0)

    @property
    def dpsi_inv(self) -> np.ndarray:
        """Stack of ``dPsi^{-1}/dq_l = -Psi^{-1} (dPsi/dq_l) Psi^{-1}``."""
        return -np.einsum("ij,ljk,km->lim", self.psi_inv, self.dpsi, self.psi_inv)

    def brackets(self) -> np.ndarray:
        """All Lie brackets, ``B[i, j] = [Psi_i, Psi_j](q)``."""
        C = self.col_jacobians
        # G[a, b] = (dPsi_a/dq) Psi_b
        G = np.einsum("aik,kb->abi", C, self.psi)
        return G.transpose(1, 0, 2) - G


def psi_factor(model: MechModel, q) -> tuple[np.ndarray, np.ndarray]:
    """``(Psi, Psi^{-1})`` at ``q`` without derivatives."""
    L = _cholesky(model, q)
    return _psi_from_chol(L), L.T


def factorize(model: MechModel, q, method: str = "auto") -> PlvccFrame:
    """Build the frame at ``q``.

    ``method`` selects how the column Jacobians are obtained: ``"analytic"``
    differentiates the Cholesky factor through the model's ``dM/dq``,
    ``"fd"`` uses central differences on ``Psi``, and ``"auto"`` picks the
    analytic route when the model supplies ``mass_matrix_derivative``.
    """
    q = np.asarray(q, dtype=float)
    L = _cholesky(model, q)
    psi = _psi_from_chol(L)
    if method == "auto":
        method = "analytic" if model.mass_matrix_derivative is not None else "fd"
    if method == "analytic":
        dpsi = _dpsi_analytic(L, psi, model.dM(q))
    elif method == "fd":
        dpsi = _dpsi_fd(model, q)
    else:
        raise ValueError(f"unknown method {method!r}")
    return PlvccFrame(q=q, psi=psi, psi_inv=L.T.copy(), dpsi=dpsi)


def _dpsi_analytic(L, psi, dM) -> np.ndarray:
    # dL = L Phi(L^-1 dM L^-T), Phi = lower triangle with halved diagonal;
    # dPsi = d(L^-T) = -Psi dL^T Psi.
    X = psi.T @ dM @ psi
    dL = L @ (X * _tril_mask(L.shape[0]))
    return -psi @ dL.transpose(0, 2, 1) @ psi


def _dpsi_fd(model: MechModel, q) -> np.ndarray:
    n = q.size
    out = np.empty((n, n, n))
    for l in range(n):
        h = fd_step(q[l])
        qp, qm = q.copy(), q.copy()
        qp[l] += h
        qm[l] -= h
        out[l] = (_psi_from_chol(_cholesky(model, qp)) - _psi_from_chol(_cholesky(model, qm))) / (2 * h)
    return out


def transform_momentum(frame: PlvccFrame, p) -> np.ndarray:
    """``P = Psi^T p``."""
    return frame.psi.T @ np.asarray(p, dtype=float)


def untransform_momentum(frame: PlvccFrame, P) -> np.ndarray:
    """Inverse map ``p = Psi^{-T} P``."""
    return frame.psi_inv.T @ np.asarray(P, dtype=float)


def lie_bracket(frame: PlvccFrame, i: int, j: int) -> np.ndarray:
    """``[Psi_i, Psi_j] = (dPsi_j/dq) Psi_i - (dPsi_i/dq) Psi_j`` (0-based indices)."""
    n = frame.n
    if not (0 <= i < n and 0 <= j < n):
        raise IndexError(f"bracket indices ({i}, {j}) out of range for n={n}")
    if i == j:
        return np.zeros(n)
    C = frame.col_jacobians
    return C[j] @ frame.psi[:, i] - C[i] @ frame.psi[:, j]


def _gyro_from_covector(frame: PlvccFrame, w) -> np.ndarray:
    # J_ij = -w . [Psi_i, Psi_j]
    return -frame.brackets() @ w


def gyroscopic_matrix(frame: PlvccFrame, P) -> np.ndarray:
    """Gyroscopic matrix ``J_ij(q, P) = -P^T Psi^{-1} [Psi_i, Psi_j]``."""
    w = frame.psi_inv.T @ np.asarray(P, dtype=float)
    return _gyro_from_covector(frame, w)


def gyroscopic_matrix_desired(model: MechModel, q_d, qd_dot, frame: Optional[PlvccFrame] = None) -> np.ndarray:
    """Gyroscopic matrix along the reference, ``-qd_dot^T M(q_d) [Psi_i, Psi_j](q_d)``."""
    if frame is None:
        frame = factorize(model, q_d)
    w = model.M(q_d) @ np.asarray(qd_dot, dtype=float)
    return _gyro_from_covector(frame, w)


def transformed_rhs(model: MechModel, q, P, u, frame: Optional[PlvccFrame] = None):
    """Dynamics in ``(q, P)``: ``qdot = Psi P``, ``Pdot = -Psi^T dV + J P + Psi^T u``."""
    q = np.asarray(q, dtype=float)
    P = np.asarray(P, dtype=float)
    if frame is None:
        frame = factorize(model, q)
    qdot = frame.psi @ P
    Pdot = frame.psi.T @ (np.asarray(u, dtype=float) - model.dV(q)) + gyroscopic_matrix(frame, P) @ P
    return qdot, Pdot
