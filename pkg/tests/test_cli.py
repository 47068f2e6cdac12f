"""Command-line orchestration: validation, artifacts, determinism, exit codes."""

import json
from pathlib import Path

import pytest

from coagfrag.cli import main, validate

BASE_SIM = """
mode = "simulate"

[sim]
initial = [1.0, 1.0, 1.0, 1.0]
horizon = 1.0
seed = 7
lam = 0.5
replicas = 40

[sim.coag]
kind = "sum_power"
alpha = 1.0
beta = 1.0

[sim.frag]
kind = "constant"
value = 1.0

[sim.beta]
preset = "binary_half"
"""


def _write(tmp_path, text, name="exp.toml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def _toml(text):
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib
    return tomllib.loads(text)


def test_validate_echoes_constants():
    spec, errors = validate(_toml(BASE_SIM), "simulate", out_dir="out", fmt="csv", workers=1)
    assert errors == []
    consts = spec.normalized["constants"]
    assert consts["beta_total_weight"] == pytest.approx(1.0)
    assert consts["c_beta_lambda"] == pytest.approx(2.0**0.5)  # lam = 0.5
    assert consts["max_fragments"] == 2
    assert consts["initial_norm_lambda"] == pytest.approx(4.0)


def test_validate_aggregates_errors():
    raw = _toml(BASE_SIM)
    raw["sim"]["lam"] = 1.5
    raw["sim"]["beta"] = {"atoms": [{"ratios": [0.7, 0.6], "weight": 1.0}]}
    spec, errors = validate(raw, "simulate", out_dir="out", fmt="csv", workers=1)
    assert spec is None
    joined = "\n".join(errors)
    assert "lam" in joined
    assert "cannot gain mass" in joined


def test_validate_rejects_degenerate_atom():
    raw = _toml(BASE_SIM)
    raw["sim"]["beta"] = {"atoms": [{"ratios": [1.0], "weight": 1.0}]}
    spec, errors = validate(raw, "simulate", out_dir="out", fmt="csv", workers=1)
    assert spec is None
    assert any("degenerate" in e for e in errors)


def test_validate_requires_seed():
    raw = _toml(BASE_SIM)
    del raw["sim"]["seed"]
    spec, errors = validate(raw, "simulate", out_dir="out", fmt="csv", workers=1)
    assert spec is None
    assert any("seed" in e for e in errors)


def test_cli_exit_2_on_bad_config(tmp_path, capsys):
    bad = BASE_SIM.replace('preset = "binary_half"',
                           "atoms = [ { ratios = [0.7, 0.6], weight = 1.0 } ]")
    code = main(["simulate", "--config", _write(tmp_path, bad),
                 "--out", str(tmp_path / "out")])
    assert code == 2
    assert "cannot gain mass" in capsys.readouterr().err


def test_cli_exit_2_on_missing_file(tmp_path):
    code = main(["simulate", "--config", str(tmp_path / "nope.toml"),
                 "--out", str(tmp_path / "out")])
    assert code == 2


def test_simulate_mode_artifacts_and_determinism(tmp_path):
    cfg = _write(tmp_path, BASE_SIM)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--config", cfg, "--out", str(out1), "--workers", "1"]) == 0
    assert main(["simulate", "--config", cfg, "--out", str(out2), "--workers", "2"]) == 0
    ev1 = (out1 / "events.csv").read_bytes()
    ev2 = (out2 / "events.csv").read_bytes()
    assert ev1 == ev2  # worker count cannot change results
    summary = json.loads((out1 / "summary.json").read_text())
    assert summary["spec"]["mode"] == "simulate"
    assert summary["spec"]["sim"]["seed"] == 7
    verdicts = {v["name"]: v for v in summary["verdicts"]}
    assert verdicts["moment_sup_bound"]["pass"] is True
    assert verdicts["count_sup_bound"]["pass"] is True
    header = ev1.decode().splitlines()[0]
    assert header == "replica,time,kind,i,j_or_atom,post_count,post_mass,post_norm_lambda,stopped"


def test_seed_override_changes_events(tmp_path):
    cfg = _write(tmp_path, BASE_SIM)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--config", cfg, "--out", str(out1)]) == 0
    assert main(["simulate", "--config", cfg, "--seed", "8", "--out", str(out2)]) == 0
    assert (out1 / "events.csv").read_bytes() != (out2 / "events.csv").read_bytes()
    assert json.loads((out2 / "summary.json").read_text())["spec"]["sim"]["seed"] == 8


def test_json_lines_format(tmp_path):
    cfg = _write(tmp_path, BASE_SIM)
    out = tmp_path / "jl"
    assert main(["simulate", "--config", cfg, "--out", str(out),
                 "--format", "json-lines", "--replicas", "5"]) == 0
    lines = (out / "events.jsonl").read_text().splitlines()
    assert lines
    first = json.loads(lines[0])
    assert {"replica", "time", "kind", "i", "j_or_atom"} <= set(first)


def test_couple_mode(tmp_path):
    text = BASE_SIM.replace('mode = "simulate"', 'mode = "couple"') + """
stop_norm = 12.0

[coupling]
perturb_index = 1
perturb_delta = 0.01
"""
    # stop_norm belongs to [sim]; splice it there instead of top level.
    text = text.replace('replicas = 40', 'replicas = 40\nstop_norm = 12.0').replace(
        "\nstop_norm = 12.0\n\n[coupling]", "\n\n[coupling]")
    cfg = _write(tmp_path, text)
    out = tmp_path / "couple"
    assert main(["couple", "--config", cfg, "--out", str(out), "--replicas", "30"]) == 0
    assert (out / "events_a.csv").exists()
    assert (out / "events_b.csv").exists()
    summary = json.loads((out / "summary.json").read_text())
    agg = summary["aggregates"]
    assert agg["sup_delta_max"] >= agg["sup_delta_median"] >= 0.0
    assert agg["initial_delta_lambda"] > 0.0
    assert agg["rate_constant"] > 0.0


def test_verify_mode(tmp_path):
    text = """
mode = "verify-inequalities"

[sim]
initial = [1.0]
horizon = 1.0
seed = 3
lam = 1.0
replicas = 1

[sim.coag]
kind = "constant"
value = 1.0

[sim.frag]
kind = "constant"
value = 1.0

[sim.beta]
preset = "binary_half"

[verify]
cases = 200
"""
    cfg = _write(tmp_path, text)
    out = tmp_path / "verify"
    assert main(["verify", "--config", cfg, "--out", str(out)]) == 0
    report = (out / "verify_report.txt").read_text()
    assert "merge_self_distance" in report
    assert "min_slack" in report or "slack" in report


def test_oracle_mode(tmp_path):
    text = """
mode = "oracle-compare"

[sim]
initial = [1.0, 1.0]
horizon = 1.0
seed = 11
lam = 1.0
replicas = 4000

[sim.coag]
kind = "constant"
value = 1.0

[sim.frag]
kind = "constant"
value = 0.0

[sim.beta]
preset = "binary_half"

[oracle]
max_jumps = 1
tolerance = 0.05
observable = "count"
"""
    cfg = _write(tmp_path, text)
    out = tmp_path / "oracle"
    assert main(["oracle", "--config", cfg, "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    verdicts = {v["name"]: v for v in summary["verdicts"]}
    assert verdicts["oracle_tv"]["pass"] is True
    assert summary["oracle"]["states"] == 2
    assert (out / "oracle_distribution.txt").exists()


def test_bounds_mode(tmp_path, capsys):
    cfg = _write(tmp_path, BASE_SIM.replace('mode = "simulate"', 'mode = "bounds-report"'))
    out = tmp_path / "bounds"
    assert main(["bounds", "--config", cfg, "--out", str(out)]) == 0
    printed = capsys.readouterr().out
    assert "moment_sup_bound" in printed
    assert "coupling_rate_constant" in printed


def test_shipped_configs_validate():
    here = Path(__file__).resolve().parent.parent / "configs"
    for name, mode in [
        ("simulate.toml", "simulate"),
        ("couple.toml", "couple"),
        ("verify.toml", "verify-inequalities"),
        ("oracle.toml", "oracle-compare"),
        ("bounds.toml", "bounds-report"),
    ]:
        raw = _toml((here / name).read_text())
        spec, errors = validate(raw, mode, out_dir="out", fmt="csv", workers=1)
        assert errors == [], f"{name}: {errors}"
        assert spec is not None
