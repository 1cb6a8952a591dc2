import json

import pytest
import yaml

from halfeig import cli

EIG = """\
command: eig
operator:
  preset: pucci_plus
  params: {dimension: 1, lo: 1, hi: 4}
grid: {dimension: 1, radius: 1, h: 0.005}
sign: "+"
seed: 3
"""


def _run(tmp_path, text, command=None, extra=()):
    cfg = tmp_path / "run.yaml"
    cfg.write_text(text)
    command = command or text.split()[1]
    out = tmp_path / "out"
    return cli.main([command, "--config", str(cfg), "--out", str(out), *extra]), out


def test_eig_run_writes_result(tmp_path):
    code, out = _run(tmp_path, EIG)
    assert code == 0
    res = json.loads((out / "result.json").read_text())
    assert res["payload"]["lambda"] == pytest.approx(2.467, abs=0.01)
    assert res["payload"]["sign"] == "+"
    assert "residual_inf" in res["payload"]
    assert res["config"]["seed"] == 3
    assert (out / "eigenfunction.csv").exists()


def test_seed_override_is_echoed(tmp_path):
    code, out = _run(tmp_path, EIG, extra=("--seed", "17"))
    assert code == 0
    assert json.loads((out / "result.json").read_text())["config"]["seed"] == 17


def test_config_echo_reproduces_payload(tmp_path):
    code, out = _run(tmp_path, EIG)
    first = json.loads((out / "result.json").read_text())
    echo = dict(first["config"])
    echo.pop("output")
    again = tmp_path / "again"
    again.mkdir()
    code2, out2 = _run(again, yaml.safe_dump(echo), "eig")
    second = json.loads((out2 / "result.json").read_text())
    assert code2 == 0 and second["payload"] == first["payload"]


def test_missing_radius_exits_2(tmp_path, capsys):
    text = "command: eig\noperator:\n  preset: linear\ngrid:\n  dimension: 1\n  h: 0.1\n"
    code, _ = _run(tmp_path, text)
    assert code == 2
    err = capsys.readouterr().err
    assert "grid.radius" in err and "line 4" in err


def test_unknown_key_exits_2(tmp_path, capsys):
    text = "command: eig\noperator:\n  preset: linear\ngrid:\n  dimension: 1\n  radius: 1\n  hh: 0.1\n"
    code, _ = _run(tmp_path, text)
    assert code == 2
    assert "line 7" in capsys.readouterr().err


def test_bad_preset_param_exits_2(tmp_path):
    text = EIG.replace("lo: 1", "low: 1")
    code, _ = _run(tmp_path, text)
    assert code == 2


def test_command_mismatch_exits_2(tmp_path):
    code, _ = _run(tmp_path, EIG, "chain")
    assert code == 2


def test_hypotheses_zero_violations(tmp_path):
    text = ("command: hypotheses\noperator: {preset: bellman2, params: {dimension: 2}}\n"
            "grid: {dimension: 2, h: 0.1}\nparams: {n_samples: 200}\n")
    code, out = _run(tmp_path, text)
    assert code == 0
    res = json.loads((out / "result.json").read_text())
    assert max(res["payload"]["violations"].values()) <= 1e-9


def test_solver_failure_exits_3(tmp_path):
    # a residual tolerance no solve can meet
    text = EIG + "tolerances: {residual: 1e-30}\n"
    code, out = _run(tmp_path, text)
    assert code == 3
    res = json.loads((out / "result.json").read_text())
    assert res["failure"]["type"] == "SolverFailure"


def test_exhaust_writes_csv(tmp_path):
    text = ("command: exhaust\noperator: {preset: linear, params: {drift: {kind: ou, rate: 1.0}}}\n"
            "grid: {dimension: 1, h: 0.02}\nparams: {radii: [1, 2, 4]}\n")
    code, out = _run(tmp_path, text)
    assert code == 0
    lines = (out / "exhaustion.csv").read_text().splitlines()
    assert lines[0] == "radius,lambda,residual" and len(lines) == 4


def test_simulate_writes_mc_table(tmp_path):
    text = ("command: simulate\noperator: {preset: bellman2}\ngrid: {dimension: 1, h: 0.05}\n"
            "params: {T: 1, dt: 0.01, n_paths: 200, policies: [0, 1], eig_radius: 4}\n")
    code, out = _run(tmp_path, text)
    assert code == 0
    header = (out / "mc.csv").read_text().splitlines()[0]
    assert header == "policy_id,lambda_hat,stderr,paths"


@pytest.mark.parametrize("text", [
    "command: chain\noperator: {preset: bellman2}\ngrid: {dimension: 1, radius: 2, h: 0.05}\n",
    "command: certify\noperator: {preset: pucci_minus, params: {lo: 1, hi: 2}}\n"
    "grid: {dimension: 1, radius: 1, h: 0.02}\nsign: '-'\n",
    "command: mp\noperator: {preset: pucci_plus, params: {lo: 1, hi: 2, potential: -1}}\n"
    "grid: {dimension: 1, radius: 2, h: 0.05}\nparams: {n_fields: 2}\n",
    "command: continuum\noperator: {preset: linear}\ngrid: {dimension: 1, radius: 2, h: 0.05}\n"
    "params: {inner_radius: 1, lams: [0.1, -10]}\n",
], ids=["chain", "certify", "mp", "continuum"])
def test_other_commands_pass(tmp_path, text):
    code, out = _run(tmp_path, text)
    assert code == 0
    assert json.loads((out / "result.json").read_text())["passed"]
