"""Smooth reference trajectories with analytic first and second derivatives."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


class TrajectorySample(NamedTuple):
    t: float
    q_d: np.ndarray
    qd_dot: np.ndarray
    qd_ddot: np.ndarray


class Trajectory:
    """Base class; subclasses implement ``sample(t)``."""

    n: int

    def sample(self, t: float) -> TrajectorySample:
        raise NotImplementedError

    def __call__(self, t: float) -> TrajectorySample:
        return self.sample(t)

    def bounds(self, t_end: float, num: int = 2001) -> dict:
        """Sup-norms of position, velocity and acceleration on ``[0, t_end]``."""
        out = np.zeros(3)
        for t in np.linspace(0.0, t_end, num):
            s = self.sample(float(t))
            out = np.maximum(out, [np.abs(s.q_d).max(), np.abs(s.qd_dot).max(), np.abs(s.qd_ddot).max()])
        if not np.all(np.isfinite(out)):
            raise ValueError("trajectory is unbounded on the sampled horizon")
        return {"q_d": out[0], "qd_dot": out[1], "qd_ddot": out[2]}


@dataclass(frozen=True)
class CircleTrajectory(Trajectory):
    """Joint-space parameterisation of a circle of radius ``r`` traced by the PERA wrist.

    ``q_d = [0, A sin(wt), pi/2 - A cos(wt)]`` with ``A = arcsin(r / L2)`` and
    ``w = 2 pi / T``.
    """

    r: float = 0.2
    T: float = 10.0
    L2: float = 0.48
    n: int = 3

    def __post_init__(self):
        if self.T <= 0:
            raise ValueError(f"period must be positive, got T={self.T}")
        if not (0 < self.r < self.L2):
            raise ValueError(f"radius must satisfy 0 < r < L2={self.L2}, got r={self.r}")

    @property
    def amplitude(self) -> float:
        return math.asin(self.r / self.L2)

    def sample(self, t: float) -> TrajectorySample:
        A = self.amplitude
        w = 2.0 * math.pi / self.T
        th = w * math.fmod(t, self.T)
        s, c = math.sin(th), math.cos(th)
        return TrajectorySample(
            t,
            np.array([0.0, A * s, 0.5 * math.pi - A * c]),
            np.array([0.0, A * w * c, A * w * s]),
            np.array([0.0, -A * w * w * s, A * w * w * c]),
        )


@dataclass(frozen=True)
class ConstantSetpoint(Trajectory):
    q_star: tuple

    def __post_init__(self):
        q = np.asarray(self.q_star, dtype=float)
        if not np.all(np.isfinite(q)):
            raise ValueError("set-point must be finite")
        object.__setattr__(self, "q_star", tuple(float(x) for x in q))

    @property
    def n(self) -> int:
        return len(self.q_star)

    def sample(self, t: float) -> TrajectorySample:
        z = np.zeros(self.n)
        return TrajectorySample(t, np.array(self.q_star), z, z.copy())


def smoothstep(x: float) -> tuple[float, float, float]:
    """Quintic ``6x^5 - 15x^4 + 10x^3`` on [0, 1] and its first two derivatives."""
    if x <= 0.0:
        return 0.0, 0.0, 0.0
    if x >= 1.0:
        return 1.0, 0.0, 0.0
    x2 = x * x
    return (
        x2 * x * (10.0 + x * (-15.0 + 6.0 * x)),
        30.0 * x2 * (1.0 - x) ** 2,
        60.0 * x * (1.0 - x) * (1.0 - 2.0 * x),
    )


@dataclass(frozen=True)
class ApproachBlend(Trajectory):
    """C2 transition from a rest configuration ``q0`` onto ``inner`` over ``t_ramp`` seconds."""

    inner: Trajectory
    t_ramp: float
    q0: tuple

    def __post_init__(self):
        if self.t_ramp <= 0:
            raise ValueError(f"t_ramp must be positive, got {self.t_ramp}")
        q0 = np.asarray(self.q0, dtype=float)
        if q0.shape != (self.inner.n,):
            raise ValueError(f"q0 must have {self.inner.n} entries")
        object.__setattr__(self, "q0", tuple(float(x) for x in q0))

    @property
    def n(self) -> int:
        return self.inner.n

    def sample(self, t: float) -> TrajectorySample:
        inner = self.inner.sample(t)
        if t >= self.t_ramp:
            return inner
        s, ds, dds = smoothstep(t / self.t_ramp)
        dds /= self.t_ramp**2
        ds /= self.t_ramp
        gap = inner.q_d - np.array(self.q0)
        return TrajectorySample(
            t,
            self.q0 + s * gap,
            ds * gap + s * inner.qd_dot,
            dds * gap + 2.0 * ds * inner.qd_dot + s * inner.qd_ddot,
        )


def circle_trajectory(r: float = 0.2, T: float = 10.0, L2: float = 0.48) -> CircleTrajectory:
    return CircleTrajectory(r=r, T=T, L2=L2)


def constant_setpoint(q_star) -> ConstantSetpoint:
    return ConstantSetpoint(tuple(np.asarray(q_star, dtype=float)))


def approach_blend(inner: Trajectory, t_ramp: float, q0) -> ApproachBlend:
    return ApproachBlend(inner, float(t_ramp), tuple(np.asarray(q0, dtype=float)))
