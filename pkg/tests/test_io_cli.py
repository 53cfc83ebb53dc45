from __future__ import annotations

import json

import numpy as np
import pytest

from uvoter import catalog
from uvoter.cli import main
from uvoter.dynamics import Boundary, SimulationConfig, ValidationError, replay, run
from uvoter.io import parse_snapshot, read_trace, write_snapshot, write_trace

FIG1 = catalog.family("fig1")


@pytest.mark.parametrize("key,boundary", [("fig1", "sealed-minus"), ("voter1d", "static-plus"), ("nn2d-2", "torus")])
def test_trace_round_trip(key, boundary):
    f = catalog.family(key)
    tr = run(SimulationConfig(f, width=10, height=7, boundary=Boundary.parse(boundary),
                              rho_plus=0.1, rho_minus=0.1, horizon=4.0, seed=2))
    back = read_trace(write_trace(tr, {"note": "x"}))
    assert np.array_equal(back.times, tr.times)  # repr keeps every bit
    assert np.array_equal(back.sites, tr.sites) and np.array_equal(back.rules, tr.rules)
    assert back.initial.same_as(tr.initial) and back.final.same_as(tr.final)
    assert back.initial.boundary == tr.initial.boundary and back.family == f


def test_snapshot_round_trip():
    tr = run(SimulationConfig(FIG1, width=6, height=5, rho_plus=0.2, rho_minus=0.1, horizon=2.0, seed=1))
    text = write_snapshot(tr.final, FIG1, tr.horizon, {"seed": 1})
    cfg, meta = parse_snapshot(text)
    assert cfg.same_as(tr.final) and np.array_equal(cfg.interior, tr.final.interior)
    assert cfg.origin == tr.final.origin and meta["time"] == "2.0"
    assert "version" in meta and meta["family"] == FIG1.to_text()
    assert write_snapshot(cfg, FIG1, tr.horizon, {"seed": 1}) == text


def test_snapshot_rejects_garbage():
    with pytest.raises(ValidationError):
        parse_snapshot("# dim: 2\n+-\n+x\n")
    with pytest.raises(ValidationError):
        parse_snapshot("# dim: 2\n+-\n+\n")


def test_tampered_trace_file_fails_replay():
    tr = run(SimulationConfig(FIG1, width=8, height=8, horizon=3.0, seed=4))
    text = write_trace(tr)
    lines = text.splitlines()
    k = next(i for i, ln in enumerate(lines) if ln.startswith("time,")) + 1
    t, x, y, a, b, r = lines[k].split(",")
    lines[k] = ",".join([t, "-1", y, a, b, r])  # a frozen seal site
    with pytest.raises(ValidationError):
        read_trace("\n".join(lines) + "\n")
    assert replay(read_trace(text)).same_as(tr.final)


# -- command line ---------------------------------------------------------------

def test_classify_commands(capsys):
    assert main(["classify", "--catalog", "fig1"]) == 0
    out = capsys.readouterr().out
    assert "class: Supercritical" in out and "disjoint rules: no" in out
    assert main(["classify", "--catalog", "nn2d-2"]) == 0
    assert "class: Critical" in capsys.readouterr().out
    assert main(["classify", "--catalog", "voter1d"]) == 0
    out = capsys.readouterr().out
    assert "class: Supercritical" in out and "disjoint rules: yes" in out


def test_bad_family_file(tmp_path, capsys):
    p = tmp_path / "f.txt"
    p.write_text("dim 2\nrule (0,0)\n")
    assert main(["classify", "--family", str(p)]) == 2
    assert "line 2" in capsys.readouterr().err
    assert main(["classify", "--family", str(tmp_path / "missing.txt")]) == 1


def test_usage_errors(capsys):
    assert main_exit(["classify"]) == 1
    assert main_exit(["oracle-check", "--trials", "0"]) == 1
    assert "invalid argument" in capsys.readouterr().err
    assert main_exit(["frobnicate"]) == 1


def main_exit(argv):
    try:
        return main(argv)
    except SystemExit as e:
        return e.code


def test_geometry_command(tmp_path, capsys):
    assert main(["geometry", "--catalog", "nn2d-2", "--scale", "3", "--output", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "directions: (1,0) (0,1) (-1,0) (0,-1)" in out and "K = 441" in out
    text = (tmp_path / "geometry.csv").read_text()
    assert text.startswith("# version:")
    rows = [ln for ln in text.splitlines() if not ln.startswith("#")]
    assert rows[0] == "x,y,region" and sum(r.endswith(",D") for r in rows) == 49
    assert main(["geometry", "--catalog", "fig1"]) == 0
    assert "supercritical" in capsys.readouterr().out


def test_closure_command(tmp_path, capsys):
    p = tmp_path / "sites.csv"
    rows = ["x,y,role"] + [f"{x},{y},{'seed' if x == y else 'domain'}" for x in range(3) for y in range(3)]
    p.write_text("\n".join(rows) + "\n")
    assert main(["closure", "--catalog", "nn2d-2", "--sites", str(p), "--witness"]) == 0
    out = capsys.readouterr().out
    assert "closed: 9 of 9 sites" in out and "step,x,y,rule_index" in out
    p.write_text("x,y,role\n0,0,victim\n")
    assert main(["closure", "--catalog", "nn2d-2", "--sites", str(p)]) == 2


def test_simulate_then_analyze(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["simulate", "--catalog", "voter1d", "--width", "30", "--rho-plus", "0.2",
                 "--rho-minus", "0.2", "--horizon", "20", "--seed", "3", "--output", str(out)]) == 0
    assert (out / "trace.csv").exists() and (out / "final.txt").exists()
    an = tmp_path / "an"
    assert main(["analyze", "--trace", str(out / "trace.csv"), "--output", str(an)]) == 0
    comp = json.loads((an / "components.json").read_text())
    assert comp["version"] and comp["source_header"]["seed"] == "3"
    for name in ("certificate.csv", "flippers.csv"):
        assert "# config:" in (an / name).read_text()
    assert main(["analyze", "--snapshot", str(out / "final.txt"), "--output", str(tmp_path / "an2")]) == 0
    assert (tmp_path / "an2" / "certificate.csv").read_text() != ""


def test_simulate_config_file_and_bad_values(tmp_path):
    cfg = tmp_path / "sim.cfg"
    cfg.write_text("catalog = fig1\nwidth = 6\nheight = 6\nhorizon = 2\n")
    assert main(["simulate", "--config", str(cfg), "--seed", "1", "--output", str(tmp_path / "a")]) == 0
    assert main(["simulate", "--config", str(cfg), "--seed", "1", "--output", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "trace.csv").read_bytes() == (tmp_path / "b" / "trace.csv").read_bytes()
    assert main(["simulate", "--catalog", "fig1", "--rho-plus", "1.5"]) == 1
    cfg.write_text("catalog = fig1\ncolour = blue\n")
    assert main(["simulate", "--config", str(cfg)]) == 1


def test_oracle_check_command(capsys):
    assert main(["oracle-check", "--trials", "5"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 3
    assert main(["oracle-check", "--trials", "5", "--suite", "closure", "--inject-fault"]) == 2
    assert "FAIL" in capsys.readouterr().out
