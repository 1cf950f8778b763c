"""
JSON run configurations and sweep specifications.

A run configuration is a single JSON object::

    {
      "model": {"name": "pera", "params": {}},
      "trajectory": {"kind": "circle", "r": 0.2, "T": 10.0,
                     "blend": {"t_ramp": 5.0, "q0": [0, 0, 0]}},
      "gains": {"profile": "pera-sim"},
      "sim": {"dt": 0.001, "t_end": 40.0},
      "limits": [18.77, 3.32, 7.72],
      "t_settle": 30.0,
      "output": {"dir": ".", "trace": "trace.csv", "report": "metrics.txt"}
    }

Unknown keys are rejected; errors name the offending field by its dotted path.
"""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .controller import GAIN_PROFILES, Gains, SaturatedGains, UnsaturatedGains
from .mech import MechModel, PeraParams, pera_model
from .simulation import SimConfig
from .trajectory import Trajectory, approach_blend, circle_trajectory, constant_setpoint


class ConfigError(ValueError):
    pass


PRESETS = ("pera-sim", "pera-exp", "setpoint-trivial")

_TOP_KEYS = {"model", "trajectory", "gains", "sim", "limits", "t_settle", "output"}
_MODEL_KEYS = {"name", "params"}
_TRAJ_KEYS = {"kind", "r", "T", "q_star", "blend"}
_BLEND_KEYS = {"t_ramp", "q0"}
_SAT_KEYS = {"alpha", "beta", "K_c", "R_c"}
_UNSAT_KEYS = {"K_I", "K_c", "R_c"}
_SIM_KEYS = {"dt", "t_end", "integrator", "q0", "p0", "xc0", "record_stride", "control_period",
             "lyap_rel_tol", "hdot_tol", "slack_constant"}
_OUT_KEYS = {"dir", "trace", "report"}


def _check_keys(d, allowed, where):
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object, got {type(d).__name__}")
    extra = sorted(set(d) - allowed)
    if extra:
        raise ConfigError(f"{where}: unknown key(s) {extra}; allowed {sorted(allowed)}")


def _number(d, key, where, default=None, positive=False):
    if key not in d:
        if default is None:
            raise ConfigError(f"{where}.{key}: required")
        return default
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not np.isfinite(v):
        raise ConfigError(f"{where}.{key}: expected a finite number, got {v!r}")
    if positive and v <= 0:
        raise ConfigError(f"{where}.{key}: must be positive, got {v}")
    return float(v)


def _vector(v, where, n=None):
    try:
        arr = np.asarray(v, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected a list of numbers, got {v!r}") from None
    if arr.ndim != 1 or (n is not None and arr.size != n) or not np.all(np.isfinite(arr)):
        raise ConfigError(f"{where}: expected {n if n else 'a'} finite number(s), got {v!r}")
    return arr


def _matrix(v, where, n):
    try:
        arr = np.asarray(v, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected an {n}x{n} matrix") from None
    if arr.ndim == 1 and arr.size == n:
        arr = np.diag(arr)
    if arr.shape != (n, n) or not np.all(np.isfinite(arr)):
        raise ConfigError(f"{where}: expected an {n}x{n} matrix or a length-{n} diagonal, got {v!r}")
    return arr


@dataclass
class RunConfig:
    """Validated run configuration; ``raw`` keeps the canonical JSON data."""

    model: MechModel
    trajectory: Trajectory
    gains: Gains
    sim: SimConfig
    limits: Optional[np.ndarray]
    t_settle: float
    output: dict
    raw: dict = field(repr=False)

    def to_json(self) -> str:
        return dumps_canonical(self.raw)


def dumps_canonical(d: dict) -> str:
    return json.dumps(d, sort_keys=True, indent=2) + "\n"


def _parse_model(d) -> tuple[MechModel, dict]:
    where = "model"
    _check_keys(d, _MODEL_KEYS, where)
    name = d.get("name", "pera")
    if name != "pera":
        raise ConfigError(f"model.name: only 'pera' is available, got {name!r}")
    params = d.get("params", {})
    _check_keys(params, set(PeraParams.__dataclass_fields__), "model.params")
    vals = {k: _number(params, k, "model.params", positive=True) for k in params}
    try:
        P = PeraParams(**vals)
    except ValueError as exc:
        raise ConfigError(f"model.params: {exc}") from None
    return pera_model(P), {"name": name, "params": P.as_dict()}


def _parse_trajectory(d, model: MechModel) -> tuple[Trajectory, dict]:
    where = "trajectory"
    _check_keys(d, _TRAJ_KEYS, where)
    kind = d.get("kind")
    canon: dict[str, Any] = {"kind": kind}
    if kind == "circle":
        if "q_star" in d:
            raise ConfigError("trajectory.q_star: not valid for kind 'circle'")
        r = _number(d, "r", where, 0.2, positive=True)
        T = _number(d, "T", where, 10.0, positive=True)
        L2 = model.params.get("L2", 0.48)
        try:
            traj = circle_trajectory(r, T, L2)
        except ValueError as exc:
            raise ConfigError(f"trajectory: {exc}") from None
        canon.update(r=r, T=T)
    elif kind == "setpoint":
        if "r" in d or "T" in d:
            raise ConfigError("trajectory: 'r'/'T' are only valid for kind 'circle'")
        if "q_star" not in d:
            raise ConfigError("trajectory.q_star: required for kind 'setpoint'")
        q = _vector(d["q_star"], "trajectory.q_star", model.n)
        traj = constant_setpoint(q)
        canon["q_star"] = q.tolist()
    else:
        raise ConfigError(f"trajectory.kind: expected 'circle' or 'setpoint', got {kind!r}")
    blend = d.get("blend")
    canon["blend"] = None
    if blend is not None:
        _check_keys(blend, _BLEND_KEYS, "trajectory.blend")
        t_ramp = _number(blend, "t_ramp", "trajectory.blend", positive=True)
        q0 = _vector(blend.get("q0", [0.0] * model.n), "trajectory.blend.q0", model.n)
        traj = approach_blend(traj, t_ramp, q0)
        canon["blend"] = {"t_ramp": t_ramp, "q0": q0.tolist()}
    return traj, canon


def _parse_gains(d, n) -> tuple[Gains, dict]:
    if not isinstance(d, dict):
        raise ConfigError("gains: expected an object")
    if "profile" in d:
        _check_keys(d, {"profile"}, "gains")
        name = d["profile"]
        if name not in GAIN_PROFILES:
            raise ConfigError(f"gains.profile: unknown profile {name!r}; known {sorted(GAIN_PROFILES)}")
        d = GAIN_PROFILES[name]
    try:
        if "K_I" in d:
            _check_keys(d, _UNSAT_KEYS, "gains")
            mats = {k: _matrix(d.get(k), f"gains.{k}", n) for k in ("K_I", "K_c", "R_c")}
            g = UnsaturatedGains(**mats)
            canon = {k: v.tolist() for k, v in mats.items()}
        else:
            _check_keys(d, _SAT_KEYS, "gains")
            for k in _SAT_KEYS:
                if k not in d:
                    raise ConfigError(f"gains.{k}: required")
            g = SaturatedGains(_vector(d["alpha"], "gains.alpha", n), _vector(d["beta"], "gains.beta", n),
                               _matrix(d["K_c"], "gains.K_c", n), _matrix(d["R_c"], "gains.R_c", n))
            canon = {"alpha": g.alpha.tolist(), "beta": g.beta.tolist(), "K_c": g.K_c.tolist(), "R_c": g.R_c.tolist()}
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"gains: {exc}") from None
    return g, canon


def _parse_sim(d, n, default_t_end) -> tuple[SimConfig, dict]:
    _check_keys(d, _SIM_KEYS, "sim")
    kw: dict[str, Any] = {}
    for k in ("dt", "t_end", "control_period", "lyap_rel_tol", "hdot_tol", "slack_constant"):
        if k in d and d[k] is not None:
            kw[k] = _number(d, k, "sim", positive=k != "slack_constant")
    kw.setdefault("t_end", default_t_end)
    if "integrator" in d:
        kw["integrator"] = d["integrator"]
    if "record_stride" in d:
        rs = d["record_stride"]
        if isinstance(rs, bool) or not isinstance(rs, int):
            raise ConfigError(f"sim.record_stride: expected an integer, got {rs!r}")
        kw["record_stride"] = rs
    for k in ("q0", "p0", "xc0"):
        if d.get(k) is not None:
            kw[k] = _vector(d[k], f"sim.{k}", n).tolist()
    try:
        cfg = SimConfig(**kw)
    except ValueError as exc:
        raise ConfigError(f"sim: {exc}") from None
    return cfg, asdict(cfg)


def parse_config(data: dict) -> RunConfig:
    """Validate a decoded JSON object into a :class:`RunConfig`."""
    _check_keys(data, _TOP_KEYS, "config")
    for k in ("model", "trajectory", "gains"):
        if k not in data:
            raise ConfigError(f"{k}: required")
    model, m_canon = _parse_model(data["model"])
    traj, t_canon = _parse_trajectory(data["trajectory"], model)
    gains, g_canon = _parse_gains(data["gains"], model.n)
    T = t_canon.get("T")
    sim, s_canon = _parse_sim(data.get("sim", {}), model.n, 4.0 * T if T else 10.0)
    limits = None
    if data.get("limits") is not None:
        lim = np.asarray(data["limits"], dtype=float) if _is_numeric(data["limits"]) else None
        if lim is None or not (lim.shape == (model.n,) or lim.shape == (model.n, 2)):
            raise ConfigError(f"limits: expected {model.n} bounds or {model.n} [min, max] pairs")
        limits = lim
    default_settle = 3.0 * T if T and 3.0 * T < sim.t_end else 0.75 * sim.t_end
    t_settle = _number(data, "t_settle", "config", default_settle)
    if not 0 <= t_settle < sim.t_end:
        raise ConfigError(f"t_settle: must lie in [0, t_end), got {t_settle}")
    out = data.get("output", {})
    _check_keys(out, _OUT_KEYS, "output")
    output = {"dir": out.get("dir", "."), "trace": out.get("trace", "trace.csv"),
              "report": out.get("report", "metrics.txt")}
    for k, v in output.items():
        if not isinstance(v, str) or not v:
            raise ConfigError(f"output.{k}: expected a non-empty string")
    raw = {"model": m_canon, "trajectory": t_canon, "gains": g_canon, "sim": s_canon,
           "limits": None if limits is None else limits.tolist(), "t_settle": t_settle, "output": output}
    return RunConfig(model, traj, gains, sim, limits, t_settle, output, raw)


def _is_numeric(v) -> bool:
    try:
        a = np.asarray(v, dtype=float)
    except (TypeError, ValueError):
        return False
    return bool(np.all(np.isfinite(a)))


def _decode(text: str, source: str) -> dict:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None


def preset_data(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; known {list(PRESETS)}")
    text = resources.files("phtrack.presets").joinpath(f"{name}.json").read_text()
    return _decode(text, f"preset {name}")


def load_data(path_or_preset) -> dict:
    """Decode a config file, or a bundled preset when given its name."""
    p = Path(path_or_preset)
    if not p.exists() and str(path_or_preset) in PRESETS:
        return preset_data(str(path_or_preset))
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc.strerror}") from None
    return _decode(text, str(p))


def load_config(path_or_preset) -> RunConfig:
    return parse_config(load_data(path_or_preset))


# --------------------------------------------------------------------------
# sweep specification

_SWEEP_KEYS = {"base", "grid", "random", "budget", "q_box", "limits", "t_settle", "workers", "output"}
_SWEEP_GAINS = ("alpha", "beta", "K_c_diag", "R_c_diag")


@dataclass
class SweepSpec:
    base: dict
    grid: Optional[dict]
    random: Optional[dict]
    budget: Optional[int]
    q_box: Optional[np.ndarray]
    workers: Optional[int]
    output: str


def parse_sweep(data: dict) -> SweepSpec:
    _check_keys(data, _SWEEP_KEYS, "sweep")
    base = data.get("base", "pera-sim")
    base_data = preset_data(base) if isinstance(base, str) else copy.deepcopy(base)
    for k in ("limits", "t_settle"):
        if k in data:
            base_data[k] = data[k]
    parse_config(base_data)  # validates the base
    grid, rnd = data.get("grid"), data.get("random")
    if (grid is None) == (rnd is None):
        raise ConfigError("sweep: exactly one of 'grid' or 'random' is required")
    n = parse_config(base_data).model.n
    if grid is not None:
        _check_keys(grid, set(_SWEEP_GAINS), "sweep.grid")
        for k, vals in grid.items():
            if not isinstance(vals, list) or not vals:
                raise ConfigError(f"sweep.grid.{k}: expected a non-empty list of vectors")
            for i, v in enumerate(vals):
                _vector(v, f"sweep.grid.{k}[{i}]", n)
    if rnd is not None:
        _check_keys(rnd, set(_SWEEP_GAINS), "sweep.random")
        for k, rng in rnd.items():
            if not isinstance(rng, list) or len(rng) != 2:
                raise ConfigError(f"sweep.random.{k}: expected [low_vector, high_vector]")
            lo, hi = _vector(rng[0], f"sweep.random.{k}[0]", n), _vector(rng[1], f"sweep.random.{k}[1]", n)
            if np.any(lo > hi):
                raise ConfigError(f"sweep.random.{k}: low exceeds high")
    budget = data.get("budget")
    if budget is not None and (isinstance(budget, bool) or not isinstance(budget, int) or budget < 1):
        raise ConfigError(f"sweep.budget: expected an integer >= 1, got {budget!r}")
    if rnd is not None and budget is None:
        raise ConfigError("sweep.budget: required for random sweeps")
    q_box = None
    if data.get("q_box") is not None:
        q_box = np.asarray(data["q_box"], dtype=float)
        if q_box.shape != (n, 2) or np.any(q_box[:, 0] > q_box[:, 1]):
            raise ConfigError(f"sweep.q_box: expected {n} [low, high] pairs")
    workers = data.get("workers")
    if workers is not None and (not isinstance(workers, int) or workers < 1):
        raise ConfigError("sweep.workers: expected a positive integer")
    return SweepSpec(base_data, grid, rnd, budget, q_box, workers, data.get("output", "leaderboard.csv"))


def load_sweep(path) -> SweepSpec:
    return parse_sweep(load_data(path))
