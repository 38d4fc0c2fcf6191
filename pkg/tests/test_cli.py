import dataclasses
import json
import math

import pytest

from horseshoe_lab import cli


def run(tmp_path, *argv, sub="out"):
    out = tmp_path / sub
    code = cli.main([*argv, "--out", str(out)])
    return code, out


def test_solve_params_writes_files(tmp_path):
    code, out = run(tmp_path, "solve-params")
    assert code == 0
    for name in ("params.kv", "params.json", "conditions.csv", "solve_params.json", "config.kv"):
        assert (out / name).exists()
    summary = json.loads((out / "solve_params.json").read_text())
    assert summary["passed"] and summary["min_margin"] > 0


def test_validate_roundtrip_and_tamper(tmp_path, p):
    code, out = run(tmp_path, "solve-params")
    code, _ = run(tmp_path, "validate", "--params", str(out / "params.kv"), sub="v1")
    assert code == 0
    bad = tmp_path / "bad.json"
    bad.write_text(dataclasses.replace(p, b=1.5 * p.b).to_json())
    code, out2 = run(tmp_path, "validate", "--params", str(bad), sub="v2")
    assert code == 1
    witness = json.loads((out2 / "witness.json").read_text())
    assert "(4b)" in [v["id"] for v in witness["violated"]]


def test_bad_config_exits_2(tmp_path, capsys):
    cfg = tmp_path / "bad.kv"
    cfg.write_text("lam = not-a-number\n")
    code, _ = run(tmp_path, "solve-params", "--config", str(cfg))
    assert code == 2
    code, _ = run(tmp_path, "validate", "--config", str(tmp_path / "missing.kv"))
    assert code == 2
    code, _ = run(tmp_path, "decode", "66.6")
    assert code == 2
    assert "error" in capsys.readouterr().err


def test_unknown_command_exits_2():
    with pytest.raises(SystemExit) as e:
        cli.main(["no-such-command"])
    assert e.value.code == 2


def test_config_file_sets_sizes(tmp_path):
    cfg = tmp_path / "c.kv"
    cfg.write_text("# small sweep\norbits = 30\ndepth = 10\nper_orbit = 5\nseed = 4\n")
    code, out = run(tmp_path, "cones-sweep", "--config", str(cfg))
    assert code == 0
    s = json.loads((out / "cones.json").read_text())
    assert s["points"] == 150 and s["failures"] == 0
    assert "seed=4" in (out / "config.kv").read_text()


def test_thread_count_does_not_change_output(tmp_path):
    outs = []
    for threads in (1, 4):
        code, out = run(tmp_path, "cones-sweep", "--orbits", "250", "--depth", "10", "--per-orbit", "4",
                        "--seed", "9", "--threads", str(threads), sub=f"t{threads}")
        assert code == 0
        outs.append((out / "sweep.csv").read_bytes())
    assert outs[0] == outs[1]


def test_env_thread_default(tmp_path, monkeypatch):
    monkeypatch.setenv("HORSESHOE_LAB_THREADS", "3")
    code, out = run(tmp_path, "cones-sweep", "--orbits", "20", "--depth", "8", "--per-orbit", "2")
    assert code == 0


def test_orbit_commands(tmp_path):
    code, out = run(tmp_path, "orbit", "--word", "7777777.4816816")
    assert code == 0
    lines = (out / "orbit.csv").read_text().splitlines()
    assert lines[0] == "j,symbol,x,y,visit" and len(lines) == 15
    code, out = run(tmp_path, "orbit", "--critical", "5", "5", sub="crit")
    assert code == 0 and (out / "critical_orbit.csv").exists()


def test_pressure_command(tmp_path, capsys):
    code, out = run(tmp_path, "pressure", "--depth", "6")
    assert code == 0
    s = json.loads((out / "pressure.json").read_text())
    assert abs(s["pressure"] - math.log(3)) < 1e-8


def test_equilibrium_command(tmp_path):
    code, out = run(tmp_path, "equilibrium", "--potential", "geometric", "--depth", "6", "--push")
    assert code == 0
    s = json.loads((out / "equilibrium.json").read_text())
    assert s["defect"] < 1e-6 and (out / "cloud.csv").exists()


def test_tangency_command(tmp_path):
    code, out = run(tmp_path, "tangency")
    assert code == 0
    s = json.loads((out / "tangency.json").read_text())
    assert s["order"] == 3 and s["kappa"] > 0


def test_code_and_decode(tmp_path):
    code, out = run(tmp_path, "decode", "7777777.4816")
    assert code == 0
    s = json.loads((out / "decode.json").read_text())
    x, y = s["point"]
    code, out = run(tmp_path, "code", repr(x), repr(y), "--back", "7", "--fwd", "4", sub="c")
    assert code == 0
    assert json.loads((out / "code.json").read_text())["word"] == "7777777.4816"
    code, out = run(tmp_path, "code", "0.5", "0.3", sub="esc")
    assert code == 1
    assert json.loads((out / "witness.json").read_text())["escape"] == 0


def test_small_certificates(tmp_path):
    assert run(tmp_path, "tube-check", "--orbits", "40", "--length", "120", sub="tc")[0] == 0
    assert run(tmp_path, "lyapunov", "--orbits", "10", "--length", "500", sub="ly")[0] == 0
    assert run(tmp_path, "expansivity", "--pairs", "20", "--length", "8", sub="ex")[0] == 0
    assert run(tmp_path, "holder", "--samples", "3", sub="ho")[0] == 0
    assert run(tmp_path, "manifolds", "--curves", "3", sub="mf")[0] == 0


def test_doubling_reports_within_clause(tmp_path):
    code, out = run(tmp_path, "doubling", "--orbits", "100")
    s = json.loads((out / "doubling.json").read_text())
    zero = [r for r in s["results"] if r["theta"] == 0.0][0]
    assert zero["N"] is None
    assert all(r["N"] is not None for r in s["results"] if r["theta"] > 0)
    # exit status follows the N ≤ 2N' clause
    assert code == (0 if all(r["within_2n_prime"] for r in s["results"] if r["theta"] > 0) else 1)
