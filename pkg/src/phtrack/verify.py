"""
Built-in property suite for the PERA model and the tracking controller.

Each check returns a :class:`Check` with the measured value and the
threshold it was compared against. ``faults`` injects deliberate errors so
the suite can be shown to fail when it should:

``flip_gyro_sign``
    negates the strictly upper triangle of every gyroscopic matrix.
``drop_gyro_ff``
    removes the gyroscopic term from the feedforward.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .controller import feedforward, gain_profile
from .mech import PhState, pera_model
from .plvcc import factorize, gyroscopic_matrix, lie_bracket
from .simulation import SimConfig, dissipation_check, simulate, simulate_open_loop
from .trajectory import approach_blend, circle_trajectory, constant_setpoint

FAULTS = ("flip_gyro_sign", "drop_gyro_ff")


@dataclass
class Check:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""


def _rng():
    return np.random.default_rng(20240607)


def check_factorization(samples: int) -> Check:
    model = pera_model()
    worst = 0.0
    for q in _rng().uniform(-np.pi, np.pi, (samples, 3)):
        f = factorize(model, q)
        Minv = np.linalg.inv(model.M(q))
        r1 = np.linalg.norm(f.psi @ f.psi.T - Minv) / np.linalg.norm(Minv)
        r2 = np.abs(f.psi @ f.psi_inv - np.eye(3)).max()
        worst = max(worst, r1, r2)
    return Check("factorization", worst <= 1e-10, worst, 1e-10, "|Psi Psi^T - M^-1|/|M^-1|, |Psi Psi^-1 - I|")


def _gyro(frame, P, faults):
    J = gyroscopic_matrix(frame, P)
    if "flip_gyro_sign" in faults:
        iu = np.triu_indices(frame.n, 1)
        J[iu] = -J[iu]
    return J


def check_skew(samples: int, faults=()) -> Check:
    model = pera_model()
    rng = _rng()
    worst = 0.0
    for _ in range(samples):
        q = rng.uniform(-np.pi, np.pi, 3)
        P = rng.normal(size=3)
        J = _gyro(factorize(model, q), P, faults)
        worst = max(worst, np.linalg.norm(J + J.T) / (1.0 + np.linalg.norm(P)))
    return Check("gyroscopic skew-symmetry", worst <= 1e-6, worst, 1e-6, "|J + J^T| / (1 + |P|)")


def check_brackets(samples: int) -> Check:
    model = pera_model()
    worst = 0.0
    for q in _rng().uniform(-np.pi, np.pi, (samples, 3)):
        f = factorize(model, q)
        for i in range(3):
            for j in range(3):
                worst = max(worst, np.abs(lie_bracket(f, i, j) + lie_bracket(f, j, i)).max())
    return Check("bracket antisymmetry", worst <= 1e-8, worst, 1e-8)


def feasibility_residual(traj, t_end: float, dt: float, faults=()) -> float:
    """Sup tracking error of the open loop driven by the feedforward from matched initial conditions."""
    model = pera_model()
    s0 = traj.sample(0.0)
    drop = "drop_gyro_ff" in faults
    cache: dict = {}

    def u(t):
        key = round(t, 12)
        if key not in cache:
            if len(cache) > 8:
                cache.clear()
            cache[key] = feedforward(model, traj.sample(t), drop_gyro=drop)
        return cache[key]

    state0 = PhState(s0.q_d, model.M(s0.q_d) @ s0.qd_dot)
    t, q, _, _ = simulate_open_loop(model, state0, SimConfig(dt=dt, t_end=t_end), u=u)
    return float(max(np.abs(qq - traj.sample(float(tt)).q_d).max() for tt, qq in zip(t, q)))


def check_feasibility(fast: bool, faults=()) -> Check:
    # q1 must move for the gyroscopic term to matter; the circle keeps q1 = 0
    circ = circle_trajectory()
    traj = approach_blend(circ, 5.0, [0.6, -0.3, 0.4])
    err = feasibility_residual(traj, 6.0 if fast else 10.0, 1e-3, faults)
    if not fast:
        err = max(err, feasibility_residual(circ, circ.T, 1e-4, faults))
    return Check("feasibility residual", err <= 1e-3, err, 1e-3, "sup |q - q_d| under u = u_d (rad)")


def check_lyapunov(fast: bool) -> Check:
    model = pera_model()
    g = gain_profile("pera-sim")
    cfg = SimConfig(dt=1e-3, t_end=5.0 if fast else 20.0)
    trace = simulate(model, g, circle_trajectory(), cfg)
    rep = dissipation_check(trace, g, cfg)
    return Check("Lyapunov monotonicity", rep.ok, float(len(rep.violations)), 0.0,
                 f"largest sample increase {rep.max_increase:.3e}")


def check_energy(fast: bool) -> Check:
    model = pera_model()
    state0 = PhState([0.4, -0.3, 1.0], [0.05, -0.02, 0.01])
    _, _, _, H = simulate_open_loop(model, state0, SimConfig(dt=1e-4, t_end=1.0 if fast else 10.0, record_stride=100))
    drift = float(np.abs(H - H[0]).max())
    return Check("energy conservation", drift <= 1e-6, drift, 1e-6, "|H(t) - H(0)| with u = 0")


def check_derivatives() -> Check:
    circ = circle_trajectory()
    trajs = [circ, approach_blend(circ, 5.0, [0.6, -0.3, 0.4]), constant_setpoint([0.1, 0.2, 0.3])]
    worst = 0.0
    h = 1e-5
    for traj in trajs:
        for t in np.linspace(0.01, 12.0, 97):
            a, b, c = traj.sample(t + h), traj.sample(t - h), traj.sample(t)
            worst = max(worst,
                        np.abs((a.q_d - b.q_d) / (2 * h) - c.qd_dot).max(),
                        np.abs((a.qd_dot - b.qd_dot) / (2 * h) - c.qd_ddot).max() / 10.0)
    return Check("trajectory derivative consistency", worst <= 1e-6, worst, 1e-6,
                 "velocity within 1e-6, acceleration within 1e-5")


def run_checks(fast: bool = False, faults=()) -> list[Check]:
    faults = frozenset(faults)
    unknown = faults - set(FAULTS)
    if unknown:
        raise ValueError(f"unknown fault(s) {sorted(unknown)}; known {list(FAULTS)}")
    samples = 100 if fast else 1000
    return [
        check_factorization(samples),
        check_skew(samples, faults),
        check_brackets(samples),
        check_feasibility(fast, faults),
        check_lyapunov(fast),
        check_energy(fast),
        check_derivatives(),
    ]


def format_table(checks: list[Check]) -> str:
    width = max(len(c.name) for c in checks)
    lines = [f"{'check':<{width}}  result  {'value':>11}  {'threshold':>9}"]
    for c in checks:
        lines.append(f"{c.name:<{width}}  {'PASS' if c.passed else 'FAIL':<6}  {c.value:11.3e}  {c.threshold:9.1e}"
                     + (f"  {c.detail}" if c.detail else ""))
    return "\n".join(lines)
