"""Command-line entry point: ``phtrack run | sweep | verify``.

Exit codes: 0 success, 1 error (bad config, I/O, divergence), 2 when a
monitor or the sweep constraint fails.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, load_config, load_sweep
from .simulation import (SimulationError, dissipation_check, format_report, metrics, simulate,
                         write_trace_csv)
from .sweep import run_sweep, write_leaderboard
from .verify import FAULTS, format_table, run_checks

log = logging.getLogger("phtrack")

OUT_ENV = "PHTRACK_OUT"

# caps for the boundedness monitor
STATE_CAP = 1e6


def _out_dir(flag, cfg_dir) -> Path:
    if flag:
        return Path(flag)
    if os.environ.get(OUT_ENV):
        return Path(os.environ[OUT_ENV])
    return Path(cfg_dir)


def cmd_run(config: str, out: str | None = None) -> int:
    try:
        cfg = load_config(config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        trace = simulate(cfg.model, cfg.gains, cfg.trajectory, cfg.sim, meta={"config": str(config)})
    except (SimulationError, ValueError) as exc:
        print(f"error: simulation failed: {exc}", file=sys.stderr)
        return 1
    m = metrics(trace, cfg.t_settle, cfg.limits, cfg.model, cfg.gains)
    bounded = all(np.abs(a).max() < STATE_CAP for a in (trace.q, trace.P_tilde, trace.x_c))
    outdir = _out_dir(out, cfg.output["dir"])
    outdir.mkdir(parents=True, exist_ok=True)
    write_trace_csv(trace, outdir / cfg.output["trace"])
    extra = {"model": cfg.model.name, "gains": type(cfg.gains).__name__,
             "config_hash": trace.meta["config_hash"], "t_settle": cfg.t_settle, "bounded": bounded}
    (outdir / cfg.output["report"]).write_text(format_report(m, extra))
    print(format_report(m, extra), end="")
    if m.lyap_violations or not bounded:
        print("monitor violation", file=sys.stderr)
        return 2
    return 0


def cmd_sweep(spec_path: str, seed: int = 0, out: str | None = None, workers: int | None = None) -> int:
    try:
        spec = load_sweep(spec_path)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    result = run_sweep(spec, seed=seed, workers=workers)
    outdir = _out_dir(out, ".")
    outdir.mkdir(parents=True, exist_ok=True)
    write_leaderboard(result, outdir / spec.output)
    for r in result.rows:
        print(f"{r['rank']:>4}  {r['hash']}  feasible={int(r['feasible'])}  "
              f"settled_error={r.get('settled_error', float('nan')):.4e}")
    if not result.feasible:
        print(f"no feasible candidates: {result.diagnosis()}", file=sys.stderr)
        return 2
    return 0


def cmd_verify(fast: bool = False, faults=()) -> int:
    checks = run_checks(fast=fast, faults=faults)
    print(format_table(checks))
    return 0 if all(c.passed for c in checks) else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="phtrack", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("run", help="simulate one configuration")
    p.add_argument("--config", required=True, help="config file or preset name")
    p.add_argument("--out", help=f"output directory (overrides ${OUT_ENV} and the config)")

    p = sub.add_parser("sweep", help="evaluate a gain sweep")
    p.add_argument("--spec", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--workers", type=int)

    p = sub.add_parser("verify", help="run the property suite")
    p.add_argument("--fast", action="store_true")
    p.add_argument("--inject-fault", action="append", default=[], choices=FAULTS, help=argparse.SUPPRESS)

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    if args.cmd == "run":
        return cmd_run(args.config, args.out)
    if args.cmd == "sweep":
        if args.seed < 0 or args.seed >= 2**64:
            parser.error("--seed must be an unsigned 64-bit integer")
        return cmd_sweep(args.spec, args.seed, args.out, args.workers)
    return cmd_verify(args.fast, args.inject_fault)


if __name__ == "__main__":
    sys.exit(main())
