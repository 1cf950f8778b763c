"""
Closed-loop simulation, Lyapunov monitoring and trace metrics.

The augmented state ``(q, p, x_c)`` is integrated with a fixed-step RK4 (or
Heun) scheme. By default the control law is evaluated inside every stage, so
the integrated system is the continuous-time closed loop; a zero-order-hold
mode with a given control period mimics a sampled controller.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .controller import (ControllerState, ControlOutput, Gains, SaturatedGains, UnsaturatedGains,
                         control, feedforward)
from .mech import MechModel, PhState, _rhs, hamiltonian, open_loop_rhs
from .plvcc import psi_factor
from .trajectory import Trajectory


class SimulationError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# integrators


def _rk4(rhs, y, t, dt):
    k1 = rhs(t, y)
    k2 = rhs(t + 0.5 * dt, y + 0.5 * dt * k1)
    k3 = rhs(t + 0.5 * dt, y + 0.5 * dt * k2)
    k4 = rhs(t + dt, y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _heun(rhs, y, t, dt):
    k1 = rhs(t, y)
    k2 = rhs(t + dt, y + dt * k1)
    return y + 0.5 * dt * (k1 + k2)


INTEGRATORS = {"rk4": _rk4, "heun": _heun}


def step(rhs: Callable[[float, np.ndarray], np.ndarray], y, t: float, dt: float, method: str = "rk4") -> np.ndarray:
    """Advance ``y' = rhs(t, y)`` by one fixed step."""
    try:
        stepper = INTEGRATORS[method]
    except KeyError:
        raise ValueError(f"unknown integrator {method!r}") from None

    def checked(tt, yy):
        d = rhs(tt, yy)
        if not np.all(np.isfinite(d)):
            raise SimulationError(f"non-finite derivative at t={tt:.6g}, state={np.asarray(yy).tolist()}")
        return d

    return stepper(checked, np.asarray(y, dtype=float), t, dt)


def integrate(rhs, y0, t_end: float, dt: float, method: str = "rk4", record_stride: int = 1):
    """Fixed-step integration on ``[0, t_end]``; returns ``(t, Y)`` at recorded steps."""
    nsteps = int(round(t_end / dt))
    y = np.asarray(y0, dtype=float)
    ts, ys = [0.0], [y]
    for k in range(nsteps):
        y = step(rhs, y, k * dt, dt, method)
        if (k + 1) % record_stride == 0 or k + 1 == nsteps:
            ts.append((k + 1) * dt)
            ys.append(y)
    return np.array(ts), np.array(ys)


def calibrate_slack_constant(dt: float = 0.1, t_end: float = 10.0) -> float:
    """Energy drift of RK4 on the unit harmonic oscillator, per unit time and per ``dt**4``."""
    t, Y = integrate(lambda t, y: np.array([y[1], -y[0]]), [1.0, 0.0], t_end, dt)
    H = 0.5 * (Y[:, 0] ** 2 + Y[:, 1] ** 2)
    return float(np.max(np.abs(H - H[0])) / (t_end * dt**4))


# Frozen output of calibrate_slack_constant(); tests check it is reproduced.
SLACK_CONSTANT = 6.9358e-4


# --------------------------------------------------------------------------
# Lyapunov functions


def _log_cosh(x):
    ax = np.abs(x)
    return ax + np.log1p(np.exp(-2.0 * ax)) - math.log(2.0)


def lyapunov_saturated(g: SaturatedGains, q_tilde, P_tilde, x_c) -> float:
    """``sum alpha/beta ln cosh(beta z) + |P_tilde|^2/2 + x_c^T K_c x_c / 2``."""
    z = np.asarray(q_tilde) + np.asarray(x_c)
    return float(np.sum(g.alpha / g.beta * _log_cosh(g.beta * z))
                 + 0.5 * np.dot(P_tilde, P_tilde) + 0.5 * x_c @ g.K_c @ x_c)


def lyapunov_quadratic(g: UnsaturatedGains, q_tilde, P_tilde, x_c) -> float:
    """``z^T K_I z / 2 + |P_tilde|^2/2 + x_c^T K_c x_c / 2``."""
    z = np.asarray(q_tilde) + np.asarray(x_c)
    return float(0.5 * z @ g.K_I @ z + 0.5 * np.dot(P_tilde, P_tilde) + 0.5 * x_c @ g.K_c @ x_c)


def lyapunov(g: Gains, q_tilde, P_tilde, x_c) -> float:
    if isinstance(g, SaturatedGains):
        return lyapunov_saturated(g, q_tilde, P_tilde, x_c)
    return lyapunov_quadratic(g, q_tilde, P_tilde, x_c)


def lyapunov_rate(g: Gains, q_tilde, x_c) -> float:
    """Dissipation ``-grad_xc^T R_c grad_xc`` predicted by the error-system structure."""
    x_c = np.asarray(x_c)
    grad = g.potential_gradient(np.asarray(q_tilde) + x_c) + g.K_c @ x_c
    return float(-grad @ g.R_c @ grad)


# --------------------------------------------------------------------------
# configuration and trace


@dataclass
class SimConfig:
    dt: float = 1e-3
    t_end: float = 40.0
    integrator: str = "rk4"
    q0: Optional[list] = None
    p0: Optional[list] = None
    xc0: Optional[list] = None
    record_stride: int = 1
    control_period: Optional[float] = None
    lyap_rel_tol: float = 1e-8
    hdot_tol: float = 1e-9
    slack_constant: float = SLACK_CONSTANT

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.t_end > self.dt:
            raise ValueError(f"t_end must exceed dt, got t_end={self.t_end}")
        if int(self.record_stride) != self.record_stride or self.record_stride < 1:
            raise ValueError(f"record_stride must be a positive integer, got {self.record_stride}")
        if self.integrator not in INTEGRATORS:
            raise ValueError(f"integrator must be one of {sorted(INTEGRATORS)}, got {self.integrator!r}")
        if self.control_period is not None:
            ratio = self.control_period / self.dt
            if self.control_period <= 0 or abs(ratio - round(ratio)) > 1e-9:
                raise ValueError("control_period must be a positive multiple of dt")

    @property
    def nsteps(self) -> int:
        return int(round(self.t_end / self.dt))

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True, default=str).encode()).hexdigest()[:16]


TRACE_ARRAYS = ("t", "q", "p", "x_c", "q_d", "qd_dot", "u", "u_ff", "u_grav", "u_hat",
                "q_tilde", "P_tilde", "z", "H", "H_dot")


@dataclass
class SimTrace:
    t: np.ndarray
    q: np.ndarray
    p: np.ndarray
    x_c: np.ndarray
    q_d: np.ndarray
    qd_dot: np.ndarray
    u: np.ndarray
    u_ff: np.ndarray
    u_grav: np.ndarray
    u_hat: np.ndarray
    q_tilde: np.ndarray
    P_tilde: np.ndarray
    z: np.ndarray
    H: np.ndarray
    H_dot: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.t.size

    @property
    def n(self) -> int:
        return self.q.shape[1]

    # CSV column layout
    def header(self) -> list[str]:
        n = self.n
        cols = ["t"]
        for prefix in ("q", "p", "xc", "qd", "u", "uff", "qt"):
            cols += [f"{prefix}{i + 1}" for i in range(n)]
        return cols + ["Hlyap"]

    def rows(self):
        blocks = [self.t[:, None], self.q, self.p, self.x_c, self.q_d, self.u, self.u_ff, self.q_tilde, self.H[:, None]]
        return np.hstack(blocks)


def write_trace_csv(trace: SimTrace, path) -> None:
    """Write the trace with full round-trip precision (``repr`` of each float)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(trace.header())
        for row in trace.rows():
            w.writerow([repr(float(x)) for x in row])


def read_trace_csv(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        data = np.array([[float(x) for x in row] for row in r])
    return {name: data[:, i] for i, name in enumerate(header)}


# --------------------------------------------------------------------------
# simulation


def _record(model, gains, reference, y, t, n, out, u_override=None, hook=None):
    q, p, x_c = y[:n], y[n:2 * n], y[2 * n:]
    s, u_d, grav_d = reference(t)
    o = control(model, gains, q, ControllerState(x_c), s, u_d, grav_d) if u_override is None else u_override
    psi, _ = psi_factor(model, q)
    _, psi_inv_d = psi_factor(model, s.q_d)
    q_tilde = q - s.q_d
    P_tilde = psi.T @ p - psi_inv_d @ s.qd_dot
    rec = dict(t=t, q=q, p=p, x_c=x_c, q_d=s.q_d, qd_dot=s.qd_dot, u=o.u, u_ff=o.u_ff, u_grav=o.u_grav,
               u_hat=o.u_hat, q_tilde=q_tilde, P_tilde=P_tilde, z=q_tilde + x_c,
               H=lyapunov(gains, q_tilde, P_tilde, x_c), H_dot=lyapunov_rate(gains, q_tilde, x_c))
    if hook is not None:
        rec = hook(rec)
    for k, v in rec.items():
        out[k].append(v)


def simulate(model: MechModel, gains: Gains, traj: Trajectory, cfg: SimConfig,
             meta: Optional[dict] = None, record_hook: Optional[Callable[[dict], dict]] = None) -> SimTrace:
    """Integrate the plant in closed loop with the position-only tracking law.

    ``record_hook`` receives each logged sample as a dict of arrays and
    returns the dict to store. It only touches the log, never the state.
    """
    n = model.n
    q0 = np.zeros(n) if cfg.q0 is None else np.asarray(cfg.q0, dtype=float)
    p0 = np.zeros(n) if cfg.p0 is None else np.asarray(cfg.p0, dtype=float)
    xc0 = np.zeros(n) if cfg.xc0 is None else np.asarray(cfg.xc0, dtype=float)
    if not (q0.shape == p0.shape == xc0.shape == (n,)) or gains.n != n or traj.n != n:
        raise ValueError("initial state, gains, trajectory and model dimensions disagree")

    ff_cache: dict[float, tuple] = {}

    def reference(t):
        # stage times of consecutive steps coincide up to rounding
        key = round(t, 12)
        hit = ff_cache.get(key)
        if hit is None:
            s = traj.sample(t)
            hit = (s, feedforward(model, s), model.dV(s.q_d))
            if len(ff_cache) > 8:
                ff_cache.clear()
            ff_cache[key] = hit
        return hit

    def law(t, q, x_c) -> ControlOutput:
        s, u_d, grav_d = reference(t)
        return control(model, gains, q, ControllerState(x_c), s, u_d, grav_d)

    held: list = [None]

    def rhs(t, y):
        q, p, x_c = y[:n], y[n:2 * n], y[2 * n:]
        o = held[0] if held[0] is not None else law(t, q, x_c)
        qdot, pdot = _rhs(model, q, p, o.u)
        s = reference(t)[0]
        return np.concatenate([qdot, pdot, gains.xc_dot(q - s.q_d, x_c)])

    zoh_every = None if cfg.control_period is None else int(round(cfg.control_period / cfg.dt))
    stepper = INTEGRATORS[cfg.integrator]
    rec: dict[str, list] = {k: [] for k in TRACE_ARRAYS}
    y = np.concatenate([q0, p0, xc0])
    if zoh_every is not None:
        held[0] = law(0.0, q0, xc0)
    _record(model, gains, reference, y, 0.0, n, rec, held[0], record_hook)
    nsteps = cfg.nsteps
    for k in range(nsteps):
        t = k * cfg.dt
        if zoh_every is not None and k % zoh_every == 0:
            held[0] = law(t, y[:n], y[2 * n:])
        y = stepper(rhs, y, t, cfg.dt)
        if not np.all(np.isfinite(y)):
            raise SimulationError(f"state diverged at t={t + cfg.dt:.6g}")
        if (k + 1) % cfg.record_stride == 0 or k + 1 == nsteps:
            tk = (k + 1) * cfg.dt
            override = None
            if zoh_every is not None:
                if (k + 1) % zoh_every == 0:
                    held[0] = law(tk, y[:n], y[2 * n:])
                override = held[0]
            _record(model, gains, reference, y, tk, n, rec, override, record_hook)

    arrays = {k: np.array(v, dtype=float) for k, v in rec.items()}
    md = {"model": model.name, "gains": type(gains).__name__, "config_hash": cfg.digest(), "dt": cfg.dt,
          "integrator": cfg.integrator}
    md.update(meta or {})
    return SimTrace(**arrays, meta=md)


def simulate_open_loop(model: MechModel, state0: PhState, cfg: SimConfig,
                       u: Optional[Callable[[float], np.ndarray]] = None):
    """Integrate the plant alone under a time-only input ``u(t)`` (zero when omitted).

    Returns ``(t, q, p, H)`` at the recorded steps.
    """
    n = model.n
    zero = np.zeros(n)

    def rhs(t, y):
        qdot, pdot = open_loop_rhs(model, PhState(y[:n], y[n:]), zero if u is None else u(t))
        return np.concatenate([qdot, pdot])

    t, Y = integrate(rhs, np.concatenate([state0.q, state0.p]), cfg.t_end, cfg.dt,
                     cfg.integrator, cfg.record_stride)
    H = np.array([hamiltonian(model, PhState(y[:n], y[n:])) for y in Y])
    return t, Y[:, :n], Y[:, n:], H


# --------------------------------------------------------------------------
# monitors and metrics


@dataclass
class DissipationReport:
    violations: list
    max_rate: float
    max_increase: float
    samples: int

    @property
    def ok(self) -> bool:
        return not self.violations


def dissipation_check(trace: SimTrace, g: Gains, cfg: Optional[SimConfig] = None) -> DissipationReport:
    """Check the Lyapunov monitor along a trace.

    Two conditions are tested at every sample: the predicted rate
    ``-grad_xc^T R_c grad_xc`` must not exceed ``hdot_tol``, and the recorded
    value must not grow by more than ``lyap_rel_tol * (1 + H) + C dt^4``
    between consecutive samples.
    """
    if trace.meta.get("gains", type(g).__name__) != type(g).__name__:
        raise ValueError(f"trace was produced with {trace.meta['gains']}, got {type(g).__name__}")
    cfg = cfg or SimConfig(dt=trace.meta.get("dt", 1e-3), t_end=max(trace.t[-1], 2 * trace.meta.get("dt", 1e-3)))
    rates = np.array([lyapunov_rate(g, qt, xc) for qt, xc in zip(trace.q_tilde, trace.x_c)])
    H = trace.H
    slack = cfg.lyap_rel_tol * (1.0 + H[:-1]) + cfg.slack_constant * cfg.dt**4
    dH = np.diff(H)
    violations = [(int(k), float(trace.t[k]), "rate", float(r)) for k, r in enumerate(rates) if r > cfg.hdot_tol]
    violations += [(int(k + 1), float(trace.t[k + 1]), "increase", float(d))
                   for k, d in enumerate(dH) if d > slack[k]]
    return DissipationReport(violations, float(rates.max()), float(dH.max()) if dH.size else 0.0, len(trace))


@dataclass
class Metrics:
    settled_error: float
    settled_error_axis: np.ndarray
    peak_control: np.ndarray
    lyap_violations: int
    energy_drift: float
    within_limits: Optional[np.ndarray] = None

    def as_dict(self) -> dict:
        d = {"settled_error": self.settled_error, "lyap_violations": self.lyap_violations,
             "energy_drift": self.energy_drift}
        for i, v in enumerate(self.settled_error_axis):
            d[f"settled_error_{i + 1}"] = float(v)
        for i, v in enumerate(self.peak_control):
            d[f"peak_control_{i + 1}"] = float(v)
        if self.within_limits is not None:
            d["within_limits"] = bool(np.all(self.within_limits))
        return d


def passivity_residual(model: MechModel, trace: SimTrace) -> float:
    """``|H(t_end) - H(0) - int u^T qdot dt|`` from the recorded samples (trapezoid rule)."""
    Hs = np.array([hamiltonian(model, PhState(q, p)) for q, p in zip(trace.q, trace.p)])
    qdot = np.array([np.linalg.solve(model.M(q), p) for q, p in zip(trace.q, trace.p)])
    power = np.einsum("ij,ij->i", trace.u, qdot)
    work = np.sum(0.5 * (power[1:] + power[:-1]) * np.diff(trace.t))
    return float(abs(Hs[-1] - Hs[0] - work))


def metrics(trace: SimTrace, t_settle: float, limits=None, model: Optional[MechModel] = None,
            gains: Optional[Gains] = None) -> Metrics:
    if len(trace) == 0:
        raise ValueError("empty trace")
    if not t_settle < trace.t[-1]:
        raise ValueError(f"t_settle={t_settle} must precede the end of the trace ({trace.t[-1]})")
    late = trace.t >= t_settle
    per_axis = np.abs(trace.q_tilde[late]).max(axis=0)
    peak = np.abs(trace.u).max(axis=0)
    violations = len(dissipation_check(trace, gains).violations) if gains is not None else 0
    drift = passivity_residual(model, trace) if model is not None else float("nan")
    within = None
    if limits is not None:
        lim = np.asarray(limits, dtype=float)
        if lim.ndim == 1:
            within = peak < lim
        else:
            within = (trace.u.min(axis=0) >= lim[:, 0]) & (trace.u.max(axis=0) <= lim[:, 1])
    return Metrics(float(per_axis.max()), per_axis, peak, violations, drift, within)


def format_report(m: Metrics, extra: Optional[dict] = None) -> str:
    """Flat ``key = value`` text report."""
    d = dict(extra or {})
    d.update(m.as_dict())
    lines = []
    for k, v in d.items():
        lines.append(f"{k} = {repr(v) if isinstance(v, float) else v}")
    return "\n".join(lines) + "\n"


def parse_report(text: str) -> dict:
    out = {}
    for line in text.splitlines():
        if "=" in line:
            k, v = (s.strip() for s in line.split("=", 1))
            out[k] = v
    return out
