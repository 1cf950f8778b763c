"""Gain sweeps: evaluate candidate gain sets in parallel and rank them."""

from __future__ import annotations

import copy
import csv
import hashlib
import itertools
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .config import SweepSpec, parse_config
from .controller import SaturatedGains, feedforward, gravity_sup
from .simulation import metrics, simulate


def _base_gains(base: dict) -> dict:
    g = parse_config(base).gains
    if not isinstance(g, SaturatedGains):
        raise ValueError("sweeps operate on saturated gain sets")
    return {"alpha": g.alpha.tolist(), "beta": g.beta.tolist(),
            "K_c_diag": np.diag(g.K_c).tolist(), "R_c_diag": np.diag(g.R_c).tolist()}


def candidates(spec: SweepSpec, seed: int) -> list[dict]:
    """Expand the spec into gain dictionaries (deterministic for a seed)."""
    base = _base_gains(spec.base)
    rng = np.random.default_rng(seed)
    if spec.grid is not None:
        keys = list(base)
        axes = [spec.grid.get(k, [base[k]]) for k in keys]
        combos = [dict(zip(keys, [list(map(float, v)) for v in c])) for c in itertools.product(*axes)]
        if spec.budget is not None and spec.budget < len(combos):
            idx = np.sort(rng.choice(len(combos), spec.budget, replace=False))
            combos = [combos[i] for i in idx]
        return combos
    out = []
    for _ in range(spec.budget):
        c = dict(base)
        for k in base:
            if k in spec.random:
                lo, hi = (np.asarray(v, dtype=float) for v in spec.random[k])
                c[k] = rng.uniform(lo, hi).tolist()
        out.append(c)
    return out


def candidate_hash(c: dict) -> str:
    return hashlib.sha256(json.dumps(c, sort_keys=True).encode()).hexdigest()[:12]


def _config_for(base: dict, c: dict) -> dict:
    data = copy.deepcopy(base)
    data["gains"] = {"alpha": c["alpha"], "beta": c["beta"], "K_c": c["K_c_diag"], "R_c": c["R_c_diag"]}
    return data


def _evaluate(args) -> dict:
    base, c = args
    cfg = parse_config(_config_for(base, c))
    try:
        trace = simulate(cfg.model, cfg.gains, cfg.trajectory, cfg.sim)
    except Exception as exc:  # divergent candidates are reported, not fatal
        return {"error": str(exc)}
    m = metrics(trace, cfg.t_settle, cfg.limits, cfg.model, cfg.gains)
    return {"settled_error": m.settled_error, "peak_control": m.peak_control.tolist(),
            "lyap_violations": m.lyap_violations}


@dataclass
class SweepResult:
    rows: list[dict]

    @property
    def feasible(self) -> list[dict]:
        return [r for r in self.rows if r["feasible"]]

    def diagnosis(self) -> str:
        """Which constraint rules candidates out, per axis."""
        if not self.rows:
            return "no candidates"
        n = len(self.rows[0]["budget"])
        counts = np.zeros(n, dtype=int)
        worst = np.full(n, -np.inf)
        for r in self.rows:
            over = np.asarray(r["budget"]) - np.asarray(r["limit"])
            counts += over > 0
            worst = np.maximum(worst, over)
        parts = [f"axis {i + 1}: budget exceeds limit in {counts[i]}/{len(self.rows)} candidates "
                 f"(worst excess {worst[i]:.4g} N m)" for i in range(n) if counts[i]]
        errors = sum(1 for r in self.rows if r.get("error"))
        if errors:
            parts.append(f"{errors} candidate(s) failed to simulate")
        return "; ".join(parts) or "all candidates within the saturation budget"


def run_sweep(spec: SweepSpec, seed: int = 0, workers: Optional[int] = None) -> SweepResult:
    cfg = parse_config(spec.base)
    model, traj = cfg.model, cfg.trajectory
    # gain-independent parts of the saturation budget
    ff_sup = np.zeros(model.n)
    for t in np.linspace(0.0, cfg.sim.t_end, 2001):
        s = traj.sample(float(t))
        ff_sup = np.maximum(ff_sup, np.abs(feedforward(model, s) - model.dV(s.q_d)))
    grav = gravity_sup(model, spec.q_box)
    lim = cfg.limits if cfg.limits is not None else np.full(model.n, np.inf)
    upper = lim if lim.ndim == 1 else np.minimum(-lim[:, 0], lim[:, 1])

    cands = sorted(candidates(spec, seed), key=candidate_hash)
    jobs = [(spec.base, c) for c in cands]
    workers = workers or spec.workers or os.cpu_count() or 1
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as ex:
            results = list(ex.map(_evaluate, jobs))
    else:
        results = [_evaluate(j) for j in jobs]

    rows = []
    for c, res in zip(cands, results):
        budget = ff_sup + grav + np.asarray(c["alpha"])
        ok = bool(np.all(budget <= upper)) and "error" not in res
        rows.append({"hash": candidate_hash(c), "feasible": ok, "budget": budget.tolist(),
                     "limit": upper.tolist(), **c, **res})
    rows.sort(key=lambda r: (not r["feasible"], r.get("settled_error", np.inf), r["hash"]))
    for i, r in enumerate(rows):
        r["rank"] = i + 1
    return SweepResult(rows)


def write_leaderboard(result: SweepResult, path) -> None:
    if not result.rows:
        return
    n = len(result.rows[0]["budget"])
    idx = range(1, n + 1)
    header = (["rank", "hash", "feasible", "settled_error", "lyap_violations"]
              + [f"peak_u{i}" for i in idx] + [f"budget{i}" for i in idx]
              + [f"alpha{i}" for i in idx] + [f"beta{i}" for i in idx]
              + [f"kc{i}" for i in idx] + [f"rc{i}" for i in idx] + ["error"])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in result.rows:
            peak = r.get("peak_control", [float("nan")] * n)
            w.writerow([r["rank"], r["hash"], int(r["feasible"]), repr(r.get("settled_error", float("nan"))),
                        r.get("lyap_violations", "")]
                       + [repr(float(x)) for x in peak] + [repr(float(x)) for x in r["budget"]]
                       + [repr(float(x)) for k in _GAIN_COLS for x in r[k]] + [r.get("error", "")])


_GAIN_COLS = ("alpha", "beta", "K_c_diag", "R_c_diag")
