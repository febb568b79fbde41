import csv
import io
import json

import pytest

from rtoep import cli

DISK = {"name": "ball-lambda", "n": 1, "params": {"lambda": 0.0}}
BALL2 = {"name": "ball-lambda", "n": 2}


def run_cli(tmp_path, command, spec, *extra):
    path = tmp_path / f"{command}.json"
    path.write_text(json.dumps(spec))
    out = tmp_path / f"{command}.out"
    code = cli.main([command, "--spec", str(path), "--out", str(out), *extra])
    return code, out.read_text() if out.exists() else ""


def csv_rows(text):
    body = [line for line in text.splitlines() if not line.startswith("#")]
    return list(csv.reader(io.StringIO("\n".join(body))))


def test_gamma_csv_matches_closed_form(tmp_path):
    code, text = run_cli(tmp_path, "gamma", {"domain": DISK, "symbol": {"type": "power", "exponents": [2]}, "P": 10})
    assert code == 0
    rows = csv_rows(text)
    assert rows[0] == ["p_1", "gamma"]
    for p, value in rows[1:]:
        assert float(value) == pytest.approx((int(p) + 1) / (int(p) + 2), rel=1e-10)
    assert len(rows[1][1].split("e")[0].replace(".", "").lstrip("-")) == 17


def test_gamma_simplex_route_json(tmp_path):
    spec = {"domain": BALL2, "symbol": {"type": "annulus", "inner": 0.0, "outer": 0.5}, "P": 3,
            "route": "simplex"}
    code, text = run_cli(tmp_path, "gamma", spec, "--format", "json")
    assert code == 0
    data = json.loads(text)
    assert data["rows"][0]["gamma"] == pytest.approx(0.5 ** 4, rel=1e-8)


@pytest.mark.slow
def test_verify_ball_passes(tmp_path):
    code, text = run_cli(tmp_path, "verify", {"domain": BALL2, "P": 4, "samples": 10})
    assert code == 0
    rows = csv_rows(text)
    assert all(r[1] == "true" for r in rows[1:])


def test_verify_failure_exit_code(tmp_path):
    spec = {"domain": DISK, "P": 3, "samples": 3, "tolerances": {"normalization": 1e-30}}
    code, _ = run_cli(tmp_path, "verify", spec)
    assert code == 1


def test_asymptotics_json(tmp_path):
    spec = {"domain": BALL2, "axis": 1, "direction": [1.0, 0.5]}
    code, text = run_cli(tmp_path, "asymptotics", spec, "--format", "json")
    assert code == 0
    head = json.loads(text)["header"]
    assert head["final_deviation"] < 1e-3
    assert head["monotone_tail"]


@pytest.mark.parametrize("axis", [0, 3, "1"])
def test_asymptotics_bad_axis(tmp_path, axis):
    code, _ = run_cli(tmp_path, "asymptotics", {"domain": BALL2, "axis": axis, "direction": [1.0, 1.0]})
    assert code == 2


def test_describe(capsys):
    assert cli.main(["describe", "gamma"]) == 0
    out = capsys.readouterr().out
    assert "required: domain, symbol" in out
    assert cli.main(["describe", "verify"]) == 0
    assert "normalization=1e-09" in capsys.readouterr().out
    assert cli.main(["describe", "bogus"]) == 2


@pytest.mark.parametrize("spec", [
    {"domain": DISK, "symbol": {"type": "constant", "value": 1.0}, "colour": "red"},
    {"domain": DISK},
    {"domain": {"name": "torus", "n": 1}, "symbol": {"type": "constant", "value": 1.0}},
    {"domain": DISK, "symbol": {"type": "power", "exponents": [1, 2]}},
    {"domain": DISK, "symbol": {"type": "constant", "value": 1.0}, "P": -1},
])
def test_invalid_specs_exit_two(tmp_path, spec):
    code, _ = run_cli(tmp_path, "gamma", spec)
    assert code == 2


def test_unknown_command_and_missing_spec(tmp_path):
    assert cli.main(["bogus", "--spec", "x.json"]) == 2
    assert cli.main(["gamma"]) == 2
    assert cli.main(["gamma", "--spec", str(tmp_path / "missing.json")]) == 2


@pytest.mark.parametrize("fmt", ["csv", "json"])
def test_header_round_trip(tmp_path, fmt):
    spec = {"domain": BALL2, "symbol": {"type": "power", "exponents": [2, 0]}, "P": 3}
    _, text = run_cli(tmp_path, "spectrum", spec, "--format", fmt)
    back = cli.read_header(text)
    assert back.command == "spectrum"
    assert back.fields == spec
    assert cli.run(back)[1] == text


def test_output_is_deterministic(tmp_path, monkeypatch):
    spec = {"domain": BALL2, "points": [[0.3, 0.4], [0.1, 0.2], [0.5, 0.5]]}
    _, first = run_cli(tmp_path, "curvature", spec)
    monkeypatch.setenv("RTOEP_THREADS", "3")
    _, second = run_cli(tmp_path, "curvature", spec)
    assert first == second


def test_commutator_negative_control(tmp_path):
    spec = {"domain": DISK, "P": 4,
            "symbols": [{"type": "power", "exponents": [2]}, {"type": "angular-re-z", "axis": 1}]}
    code, text = run_cli(tmp_path, "commutator", spec, "--format", "json")
    assert code == 0
    assert json.loads(text)["rows"][0]["frobenius_norm"] > 1e-3


@pytest.mark.parametrize("command,spec", [
    ("alpha", {"domain": BALL2, "P": 3}),
    ("oracle", {"domain": DISK, "symbol": {"type": "power", "exponents": [2]}, "P": 3}),
    ("kernel", {"domain": DISK, "P": 20, "pairs": [{"z": [[0.5, 0.0]], "zeta": [[0.5, 0.0]]}]}),
    ("metric", {"domain": BALL2, "points": [[0.3, 0.4]], "mode": "finite-difference"}),
])
def test_other_commands_run(tmp_path, command, spec):
    code, text = run_cli(tmp_path, command, spec)
    assert code == 0
    assert text.startswith("# spec: ")
    assert len(csv_rows(text)) >= 2
