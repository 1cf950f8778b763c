import copy
import json

import numpy as np
import pytest

from phtrack.cli import cmd_run, cmd_sweep, main
from phtrack.config import ConfigError, dumps_canonical, load_config, parse_config, parse_sweep, preset_data
from phtrack.controller import PERA_EXP_GAINS, PERA_SIM_GAINS, SaturatedGains, UnsaturatedGains
from phtrack.mech import PeraParams
from phtrack.simulation import metrics, parse_report, read_trace_csv, simulate
from phtrack.sweep import candidates, run_sweep
from phtrack.verify import FAULTS, check_feasibility, check_skew, run_checks

SHORT = {
    "model": {"name": "pera"},
    "trajectory": {"kind": "circle", "r": 0.2, "T": 10.0, "blend": {"t_ramp": 5.0, "q0": [0.0, 0.0, 0.0]}},
    "gains": {"profile": "pera-sim"},
    "sim": {"dt": 0.002, "t_end": 1.5},
    "limits": [18.77, 3.32, 7.72],
    "t_settle": 1.0,
}
BOX = [[-0.2, 0.2], [-0.6, 0.6], [0.5, 2.2]]


def write(tmp_path, name, data):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return p


# --- config


def test_presets_encode_reference_values():
    sim = load_config("pera-sim")
    assert isinstance(sim.gains, SaturatedGains)
    np.testing.assert_array_equal(sim.gains.alpha, PERA_SIM_GAINS["alpha"])
    np.testing.assert_array_equal(sim.gains.R_c, PERA_SIM_GAINS["R_c"])
    assert sim.sim.dt == 1e-3 and sim.sim.t_end == 40.0 and sim.t_settle == 30.0
    np.testing.assert_array_equal(sim.limits, [18.77, 3.32, 7.72])
    exp = load_config("pera-exp")
    np.testing.assert_array_equal(exp.gains.beta, PERA_EXP_GAINS["beta"])
    np.testing.assert_allclose(np.diag(exp.gains.R_c), [1e-4, 1e-5, 0.45])
    assert exp.sim.control_period == 1e-3
    P = PeraParams()
    assert sim.model.params == P.as_dict()


@pytest.mark.parametrize("name", ["pera-sim", "pera-exp", "setpoint-trivial"])
def test_config_round_trip(name):
    cfg = parse_config(preset_data(name))
    again = parse_config(json.loads(cfg.to_json()))
    assert again.raw == cfg.raw
    assert dumps_canonical(again.raw) == cfg.to_json()


def test_explicit_gains_and_unsaturated():
    d = copy.deepcopy(SHORT)
    d["gains"] = {"alpha": [1, 1, 1], "beta": [2, 2, 2], "K_c": [1, 1, 1], "R_c": np.eye(3).tolist()}
    assert isinstance(parse_config(d).gains, SaturatedGains)
    d["gains"] = {"K_I": [10, 10, 10], "K_c": [1, 1, 1], "R_c": [1, 1, 1]}
    assert isinstance(parse_config(d).gains, UnsaturatedGains)


@pytest.mark.parametrize("mutate,where", [
    (lambda d: d.update(extra=1), "extra"),
    (lambda d: d["sim"].update(dtt=0.1), "sim.dtt"),
    (lambda d: d["trajectory"]["blend"].update(speed=2), "blend"),
    (lambda d: d["model"].update(name="scara"), "model"),
    (lambda d: d["gains"].update(profile="nope"), "gains"),
    (lambda d: d.update(limits=[1.0, 2.0]), "limits"),
    (lambda d: d.update(t_settle=5.0), "t_settle"),
    (lambda d: d["sim"].update(dt=-1.0), "sim.dt"),
    (lambda d: d["trajectory"].update(r=0.9), "trajectory"),
])
def test_invalid_configs_name_the_field(mutate, where):
    d = copy.deepcopy(SHORT)
    mutate(d)
    with pytest.raises(ConfigError, match=where.split(".")[-1]):
        parse_config(d)


def test_json_errors_report_position(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "model": {"name": "pera"},\n  "gains": ]\n}')
    with pytest.raises(ConfigError, match="line 3"):
        load_config(p)


# --- run


def test_malformed_config_exits_1_without_output(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    out = tmp_path / "out"
    assert main(["run", "--config", str(p), "--out", str(out)]) == 1
    assert not out.exists()
    assert "line 1" in capsys.readouterr().err


def test_schema_error_exits_1_without_output(tmp_path):
    d = copy.deepcopy(SHORT)
    d["gains"]["kp"] = 1
    out = tmp_path / "out"
    assert cmd_run(str(write(tmp_path, "c.json", d)), str(out)) == 1
    assert not out.exists()


def test_setpoint_preset(tmp_path):
    assert main(["run", "--config", "setpoint-trivial", "--out", str(tmp_path)]) == 0
    rep = parse_report((tmp_path / "metrics.txt").read_text())
    assert float(rep["settled_error"]) <= 1e-9
    assert rep["within_limits"] == "True"
    tr = read_trace_csv(tmp_path / "trace.csv")
    assert tr["t"][-1] == pytest.approx(2.0)


def test_run_is_bit_identical(tmp_path):
    cfg = write(tmp_path, "c.json", SHORT)
    a, b = tmp_path / "a", tmp_path / "b"
    assert cmd_run(str(cfg), str(a)) == 0
    assert cmd_run(str(cfg), str(b)) == 0
    assert (a / "trace.csv").read_bytes() == (b / "trace.csv").read_bytes()
    assert (a / "metrics.txt").read_bytes() == (b / "metrics.txt").read_bytes()


def test_output_dir_precedence(tmp_path, monkeypatch):
    d = copy.deepcopy(SHORT)
    d["output"] = {"dir": str(tmp_path / "from_config"), "trace": "tr.csv"}
    cfg = write(tmp_path, "c.json", d)
    monkeypatch.setenv("PHTRACK_OUT", str(tmp_path / "from_env"))
    assert cmd_run(str(cfg)) == 0
    assert (tmp_path / "from_env" / "tr.csv").exists()
    assert cmd_run(str(cfg), str(tmp_path / "from_flag")) == 0
    assert (tmp_path / "from_flag" / "tr.csv").exists()
    monkeypatch.delenv("PHTRACK_OUT")
    assert cmd_run(str(cfg)) == 0
    assert (tmp_path / "from_config" / "tr.csv").exists()


def test_monitor_violation_exits_2(tmp_path):
    # zero-order hold at a coarse period breaks the continuous-time dissipation bound
    d = copy.deepcopy(SHORT)
    d["sim"].update(dt=0.001, control_period=0.02)
    d["trajectory"]["blend"]["q0"] = [0.3, 0.3, 0.3]
    assert cmd_run(str(write(tmp_path, "c.json", d)), str(tmp_path / "o")) == 2
    assert (tmp_path / "o" / "metrics.txt").exists()


# --- sweep


def sweep_spec(**kw):
    spec = {"base": copy.deepcopy(SHORT), "grid": {}, "q_box": BOX, "workers": 1}
    spec.update(kw)
    return spec


def test_single_point_sweep_matches_run(tmp_path):
    spec = sweep_spec(grid={"alpha": [PERA_SIM_GAINS["alpha"]]})
    assert cmd_sweep(str(write(tmp_path, "s.json", spec)), seed=0, out=str(tmp_path)) == 0
    rows = (tmp_path / "leaderboard.csv").read_text().splitlines()
    assert len(rows) == 2
    row = dict(zip(rows[0].split(","), rows[1].split(",")))
    cfg = parse_config(SHORT)
    m = metrics(simulate(cfg.model, cfg.gains, cfg.trajectory, cfg.sim), cfg.t_settle)
    assert float(row["settled_error"]) == m.settled_error
    assert [float(row[f"peak_u{i}"]) for i in (1, 2, 3)] == m.peak_control.tolist()
    assert row["feasible"] == "1"


def test_large_alpha_is_infeasible():
    spec = parse_sweep(sweep_spec(grid={"alpha": [PERA_SIM_GAINS["alpha"], [11.0, 5.0, 6.0]]}))
    res = run_sweep(spec, seed=0, workers=2)
    by_alpha = {tuple(r["alpha"]): r for r in res.rows}
    assert by_alpha[(11.0, 1.7, 6.0)]["feasible"]
    assert not by_alpha[(11.0, 5.0, 6.0)]["feasible"]
    assert res.rows[0]["feasible"] and res.rows[0]["rank"] == 1


def test_no_feasible_candidate_exits_2(tmp_path, capsys):
    spec = sweep_spec(grid={"alpha": [[11.0, 5.0, 6.0]]})
    assert cmd_sweep(str(write(tmp_path, "s.json", spec)), out=str(tmp_path)) == 2
    assert "axis 2" in capsys.readouterr().err


def test_global_box_rules_out_reference_gains():
    # without a joint box the gravity sup on axis 2 alone leaves less than alpha_2 of headroom
    spec = sweep_spec(grid={"alpha": [PERA_SIM_GAINS["alpha"]]})
    del spec["q_box"]
    res = run_sweep(parse_sweep(spec), seed=0)
    assert not res.feasible
    assert "axis 2" in res.diagnosis()


def test_seeded_random_sweep_is_deterministic(tmp_path):
    spec = sweep_spec(random={"alpha": [[8, 1, 4], [12, 1.7, 7]], "beta": [[20, 20, 20], [40, 30, 30]]},
                      budget=3, workers=2)
    del spec["grid"]
    p = write(tmp_path, "s.json", spec)
    assert cmd_sweep(str(p), seed=7, out=str(tmp_path / "a")) in (0, 2)
    assert cmd_sweep(str(p), seed=7, out=str(tmp_path / "b")) in (0, 2)
    a = (tmp_path / "a" / "leaderboard.csv").read_bytes()
    assert a == (tmp_path / "b" / "leaderboard.csv").read_bytes()
    assert len(a.splitlines()) == 4
    c1 = candidates(parse_sweep(spec), 7)
    c2 = candidates(parse_sweep(spec), 8)
    assert c1 != c2


def test_sweep_spec_validation():
    with pytest.raises(ConfigError):
        parse_sweep(sweep_spec(random={"alpha": [[1, 1, 1], [2, 2, 2]]}))
    with pytest.raises(ConfigError):
        parse_sweep({"base": SHORT, "random": {"alpha": [[1, 1, 1], [2, 2, 2]]}})
    with pytest.raises(ConfigError):
        parse_sweep(sweep_spec(grid={"alpha": []}))
    with pytest.raises(ConfigError):
        parse_sweep(sweep_spec(grid={"gamma": [[1, 1, 1]]}))
    with pytest.raises(ConfigError):
        parse_sweep(sweep_spec(grid={"alpha": [[1, 1, 1]]}, budget=0))


def test_seed_must_be_unsigned():
    with pytest.raises(SystemExit):
        main(["sweep", "--spec", "x.json", "--seed", "-1"])


# --- verify


def test_verify_fast_passes(capsys):
    assert main(["verify", "--fast"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 7 and "FAIL" not in out


def test_fault_flipping_gyroscopic_sign_is_caught():
    assert check_skew(100).passed
    assert not check_skew(100, faults={"flip_gyro_sign"}).passed


def test_fault_dropping_gyroscopic_feedforward_is_caught():
    assert not check_feasibility(True, faults={"drop_gyro_ff"}).passed


def test_unknown_fault():
    with pytest.raises(ValueError):
        run_checks(fast=True, faults={"nope"})
    assert set(FAULTS) == {"flip_gyro_sign", "drop_gyro_ff"}
