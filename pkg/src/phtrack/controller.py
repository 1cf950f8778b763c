"""
Position-only passivity-based tracking controllers.

The control input is split as

    u = dV/dq(q) + u_hat + (u_d - dV/dq(q_d))

where ``u_d`` is the feedforward that makes the reference an exact solution
of the plant, and ``u_hat`` is a stabilizer acting on ``z = q_tilde + x_c``.
The controller state ``x_c`` is a filtered copy of the position error and
replaces the unmeasured velocity in the damping injection.

Nothing in this module reads the plant momentum.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional, Union

import numpy as np

from .mech import MechModel
from .plvcc import PlvccFrame, factorize, gyroscopic_matrix_desired
from .trajectory import Trajectory, TrajectorySample


def _require_pd(name: str, A) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"{name} must be square, got shape {A.shape}")
    lam = np.linalg.eigvalsh(0.5 * (A + A.T)).min()
    if not lam > 0:
        raise ValueError(f"{name} must be positive definite (smallest eigenvalue {lam:.3e})")
    return A


def _require_positive(name: str, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or not np.all(v > 0):
        raise ValueError(f"{name} must be a vector of positive entries, got {v}")
    return v


@dataclass(frozen=True)
class SaturatedGains:
    """Gains of the tanh-saturated stabilizer.

    ``alpha`` are per-axis torque amplitudes (N m), ``beta`` the slopes
    (1/rad); ``K_c`` and ``R_c`` shape the controller-state dynamics.
    """

    alpha: np.ndarray
    beta: np.ndarray
    K_c: np.ndarray
    R_c: np.ndarray

    def __post_init__(self):
        alpha = _require_positive("alpha", self.alpha)
        beta = _require_positive("beta", self.beta)
        if alpha.shape != beta.shape:
            raise ValueError("alpha and beta must have the same length")
        n = alpha.size
        for name in ("K_c", "R_c"):
            A = _require_pd(name, getattr(self, name))
            if A.shape != (n, n):
                raise ValueError(f"{name} must be {n}x{n}")
            object.__setattr__(self, name, A)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)

    @property
    def n(self) -> int:
        return self.alpha.size

    def potential_gradient(self, z) -> np.ndarray:
        return self.alpha * np.tanh(self.beta * z)

    def stabilizer(self, z) -> np.ndarray:
        return -self.potential_gradient(z)

    def xc_dot(self, q_tilde, x_c) -> np.ndarray:
        z = q_tilde + x_c
        return -self.R_c @ (self.potential_gradient(z) + self.K_c @ x_c)

    def small_signal(self) -> "UnsaturatedGains":
        """Linear gains with ``K_I = diag(alpha * beta)``."""
        return UnsaturatedGains(np.diag(self.alpha * self.beta), self.K_c, self.R_c)


@dataclass(frozen=True)
class UnsaturatedGains:
    K_I: np.ndarray
    K_c: np.ndarray
    R_c: np.ndarray

    def __post_init__(self):
        K_I = _require_pd("K_I", self.K_I)
        n = K_I.shape[0]
        object.__setattr__(self, "K_I", K_I)
        for name in ("K_c", "R_c"):
            A = _require_pd(name, getattr(self, name))
            if A.shape != (n, n):
                raise ValueError(f"{name} must be {n}x{n}")
            object.__setattr__(self, name, A)

    @property
    def n(self) -> int:
        return self.K_I.shape[0]

    def potential_gradient(self, z) -> np.ndarray:
        return self.K_I @ z

    def stabilizer(self, z) -> np.ndarray:
        return -self.K_I @ z

    def xc_dot(self, q_tilde, x_c) -> np.ndarray:
        z = q_tilde + x_c
        return -self.R_c @ (self.K_I @ z + self.K_c @ x_c)


Gains = Union[SaturatedGains, UnsaturatedGains]


@dataclass(frozen=True)
class ControllerState:
    x_c: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x_c, dtype=float)
        if not np.all(np.isfinite(x)):
            raise ValueError("controller state must be finite")
        object.__setattr__(self, "x_c", x)

    @classmethod
    def zeros(cls, n: int) -> "ControllerState":
        return cls(np.zeros(n))


class ControlOutput(NamedTuple):
    """Total command and its parts; ``u = u_grav + u_hat + u_ff``.

    ``u_ff`` is ``u_d - dV/dq(q_d)``, the part of the feedforward that is
    not gravity.
    """

    u: np.ndarray
    u_ff: np.ndarray
    u_grav: np.ndarray
    u_hat: np.ndarray


# --------------------------------------------------------------------------
# feedforward


def desired_momentum(model: MechModel, sample: TrajectorySample, frame: Optional[PlvccFrame] = None) -> np.ndarray:
    """Transformed momentum along the reference, ``P_d = Psi^{-1}(q_d) qd_dot``."""
    if frame is None:
        frame = factorize(model, sample.q_d)
    return frame.psi_inv @ sample.qd_dot


def feedforward(model: MechModel, sample: TrajectorySample, *, drop_gyro: bool = False) -> np.ndarray:
    """Input ``u_d`` under which the reference solves the open-loop dynamics.

    Everything is evaluated at ``q_d``. The time derivative of ``P_d`` is
    expanded by the chain rule,
    ``d/dt P_d = sum_k dPsi^{-1}/dq_k qd_dot_k qd_dot + Psi^{-1} qd_ddot``.

    ``drop_gyro`` removes the gyroscopic term and exists only for
    fault-injection checks.
    """
    q_d, qd_dot = sample.q_d, sample.qd_dot
    frame = factorize(model, q_d)
    P_d = frame.psi_inv @ qd_dot
    dPinv_dt = np.einsum("lij,l->ij", frame.dpsi_inv, qd_dot)
    P_d_dot = dPinv_dt @ qd_dot + frame.psi_inv @ sample.qd_ddot
    acc = P_d_dot
    if not drop_gyro:
        J_d = gyroscopic_matrix_desired(model, q_d, qd_dot, frame=frame)
        acc = acc - J_d @ P_d
    # Psi^{-T} = L
    return frame.psi_inv.T @ acc + model.dV(q_d)


# --------------------------------------------------------------------------
# controller state dynamics and stabilizers


def controller_rhs_saturated(g: SaturatedGains, q_tilde, cs: ControllerState) -> np.ndarray:
    return g.xc_dot(np.asarray(q_tilde, dtype=float), cs.x_c)


def controller_rhs_unsaturated(g: UnsaturatedGains, q_tilde, cs: ControllerState) -> np.ndarray:
    return g.xc_dot(np.asarray(q_tilde, dtype=float), cs.x_c)


def controller_rhs(g: Gains, q_tilde, cs: ControllerState) -> np.ndarray:
    return g.xc_dot(np.asarray(q_tilde, dtype=float), cs.x_c)


def control(model: MechModel, g: Gains, q, cs: ControllerState, sample: TrajectorySample,
            u_d: Optional[np.ndarray] = None, grav_d: Optional[np.ndarray] = None) -> ControlOutput:
    """Tracking law for either gain family.

    Only positions enter: measured ``q``, controller state and the
    reference sample. ``u_d`` and ``grav_d = dV/dq(q_d)`` may be passed in
    when the caller already evaluated them at ``sample.t``.
    """
    q = np.asarray(q, dtype=float)
    if u_d is None:
        u_d = feedforward(model, sample)
    if grav_d is None:
        grav_d = model.dV(sample.q_d)
    z = q - sample.q_d + cs.x_c
    u_hat = g.stabilizer(z)
    u_grav = model.dV(q)
    u_ff = u_d - grav_d
    return ControlOutput(u_grav + u_hat + u_ff, u_ff, u_grav, u_hat)


def control_saturated(model: MechModel, g: SaturatedGains, q, cs: ControllerState,
                      sample: TrajectorySample, u_d=None) -> ControlOutput:
    return control(model, g, q, cs, sample, u_d)


def control_unsaturated(model: MechModel, g: UnsaturatedGains, q, cs: ControllerState,
                        sample: TrajectorySample, u_d=None) -> ControlOutput:
    return control(model, g, q, cs, sample, u_d)


# --------------------------------------------------------------------------
# actuator budget


@dataclass
class SaturationBudget:
    bound: np.ndarray
    feedforward_sup: np.ndarray
    gravity_sup: np.ndarray
    within_limits: Optional[np.ndarray] = None

    @property
    def feasible(self) -> bool:
        return self.within_limits is None or bool(np.all(self.within_limits))


def gravity_sup(model: MechModel, q_box=None, num: int = 41) -> np.ndarray:
    """Per-axis sup of ``|dV/dq|`` over a joint box by dense grid sampling.

    ``q_box`` is a ``(n, 2)`` array of lower/upper bounds; the default is
    ``[-pi, pi]`` on every joint.
    """
    n = model.n
    box = np.tile([-np.pi, np.pi], (n, 1)) if q_box is None else np.asarray(q_box, dtype=float)
    axes = [np.linspace(lo, hi, num) for lo, hi in box]
    sup = np.zeros(n)
    for q in np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, n):
        sup = np.maximum(sup, np.abs(model.dV(q)))
    return sup


def saturation_budget(model: MechModel, g: SaturatedGains, traj: Trajectory, horizon: float,
                      limits=None, q_box=None, num_t: int = 2001) -> SaturationBudget:
    """A priori per-axis bound on ``|u_i(t)|`` for the saturated law.

    ``B_i = sup_t |u_d,i - dV_i(q_d)| + sup_q |dV_i(q)| + alpha_i`` with both
    sups taken by dense sampling. ``limits`` is either a vector of symmetric
    bounds or an ``(n, 2)`` array of ``[U_min, U_max]`` per axis.
    """
    ff_sup = np.zeros(model.n)
    for t in np.linspace(0.0, horizon, num_t):
        s = traj.sample(float(t))
        ff_sup = np.maximum(ff_sup, np.abs(feedforward(model, s) - model.dV(s.q_d)))
    if not np.all(np.isfinite(ff_sup)):
        raise ValueError("feedforward is unbounded on the sampled horizon")
    grav = gravity_sup(model, q_box)
    bound = ff_sup + grav + g.alpha
    within = None
    if limits is not None:
        lim = np.asarray(limits, dtype=float)
        if lim.ndim == 1:
            within = bound <= lim
        else:
            within = (-bound >= lim[:, 0]) & (bound <= lim[:, 1])
    return SaturationBudget(bound, ff_sup, grav, within)


# --------------------------------------------------------------------------
# gain presets

PERA_SIM_GAINS = dict(
    alpha=[11.0, 1.7, 6.0],
    beta=[40.0, 30.0, 30.0],
    K_c=np.diag([1.0, 2.0, 0.1]).tolist(),
    R_c=np.diag([0.4, 0.11, 0.5]).tolist(),
)

PERA_EXP_GAINS = dict(
    alpha=[11.0, 2.0, 6.0],
    beta=[400.0, 100.0, 120.0],
    K_c=np.diag([30.0, 20.0, 200.0]).tolist(),
    R_c=(np.diag([1.0, 0.1, 4500.0]) * 1e-4).tolist(),
)

GAIN_PROFILES = {"pera-sim": PERA_SIM_GAINS, "pera-exp": PERA_EXP_GAINS}


def gain_profile(name: str) -> SaturatedGains:
    try:
        return SaturatedGains(**GAIN_PROFILES[name])
    except KeyError:
        raise KeyError(f"unknown gain profile {name!r}; known: {sorted(GAIN_PROFILES)}") from None
