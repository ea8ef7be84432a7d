import json

import numpy as np
import pytest

from essplan.cli import bundled, load_solution, main
from essplan.dump import from_document, read_model, to_document
from essplan.instances import day_profiles, feeder
from essplan.model import BuildOptions, build
from essplan.network import case_to_dict
from essplan.scenario import scenarios_to_dict
from essplan.conic import solve_conic


@pytest.fixture
def small_inputs(tmp_path):
    case, scen = tmp_path / "case.json", tmp_path / "scen.json"
    case.write_text(json.dumps(case_to_dict(feeder(4, seed=4, pv_bus=3))))
    scen.write_text(json.dumps(scenarios_to_dict(day_profiles(4, 2, seed=4))))
    return ["--case", str(case), "--scenarios", str(scen)]


def test_validate_bundled(capsys):
    assert main(["validate"]) == 0
    out = capsys.readouterr().out
    assert "33 buses" in out and "12 x 24 h" in out


def test_validate_bad_case(tmp_path, capsys):
    doc = json.loads(bundled("case33.json").read_text())
    doc["branches"].append({"from": 33, "to": 1, "r": 0.1, "x": 0.1, "s_max": 1.0})
    bad = tmp_path / "loop.json"
    bad.write_text(json.dumps(doc))
    assert main(["validate", "--case", str(bad)]) == 2
    assert capsys.readouterr().err.startswith("error:")


def test_missing_file(capsys):
    assert main(["validate", "--case", "/nonexistent.json"]) == 2


@pytest.mark.parametrize("flags", [["--stress-step", "0"], ["--max-factor", "0.5"], ["--stress-window", "x"],
                                   ["--gap", "-1"]])
def test_bad_stress_settings(flags, tmp_path, capsys):
    assert main(["stress", "--out", str(tmp_path)] + flags) == 2


def test_config_file(tmp_path, small_inputs):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"mode": "bogus"}))
    assert main(["solve", "--config", str(cfg)] + small_inputs) == 2
    cfg.write_text(json.dumps({"unknown_key": 1}))
    assert main(["solve", "--config", str(cfg)] + small_inputs) == 2


def test_solve_report_roundtrip(tmp_path, small_inputs, capsys):
    out = tmp_path / "run"
    assert main(["solve", "--out", str(out), "--mode", "ess"] + small_inputs) == 0
    line = capsys.readouterr().out
    assert line.startswith("ess: optimal")
    doc = json.loads((out / "summary.json").read_text())
    assert doc["status"] == "optimal" and doc["sited_bus"] is not None
    assert "runtime" in (out / "run.log").read_text()
    before = {p.name: p.read_bytes() for p in out.iterdir() if p.suffix in (".json", ".csv")}
    again = tmp_path / "again"
    assert main(["report", "--solution", str(out / "solution.json"), "--out", str(again)]) == 0
    for p in again.iterdir():
        assert p.read_bytes() == before[p.name], p.name
    res = load_solution(out / "solution.json")
    # the summary keeps ten significant digits
    assert res.objective == pytest.approx(doc["objective"], rel=1e-9)


def test_two_solves_identical(tmp_path, small_inputs):
    for d in ("a", "b"):
        assert main(["solve", "--out", str(tmp_path / d)] + small_inputs) == 0
    names = sorted(p.name for p in (tmp_path / "a").iterdir() if p.name != "run.log")
    assert names == sorted(p.name for p in (tmp_path / "b").iterdir() if p.name != "run.log")
    for n in names:
        assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes(), n


def test_stress_command(tmp_path, small_inputs, capsys):
    out = tmp_path / "s"
    rc = main(["stress", "--out", str(out), "--modes", "rpc", "--stress-window", "3-4", "--stress-step", "0.5",
               "--max-factor", "2.0"] + small_inputs)
    assert rc == 0
    rows = (out / "stress_frontier.csv").read_text().splitlines()
    assert rows[0] == "mode,factor,status,cost,congested"
    assert rows[1].startswith("rpc,1,optimal")
    assert "rpc: last feasible factor" in capsys.readouterr().out


def test_dump_model(tmp_path, small_inputs):
    path = tmp_path / "model.json"
    assert main(["solve", "--mode", "rpc", "--out", str(tmp_path / "o"), "--dump-model", str(path)] + small_inputs) == 0
    prob, binaries = read_model(path)
    assert binaries.size == 0
    doc = json.loads(path.read_text())
    assert doc["columns"][0].startswith("pG[")
    sol = solve_conic(prob)
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert sol.objective == pytest.approx(summary["objective"], rel=1e-7)


def test_dump_roundtrip_exact():
    model = build(feeder(3), day_profiles(2, 1), BuildOptions("ess"))
    prob, binaries = from_document(json.loads(json.dumps(to_document(model.problem, model.binaries))))
    np.testing.assert_array_equal(binaries, model.binaries)
    p0 = model.problem
    for name in ("P", "c", "b_eq", "b_in", "lb", "ub", "h", "soc_dims", "rotated"):
        np.testing.assert_array_equal(getattr(prob, name), getattr(p0, name))
    for name in ("A_eq", "A_in", "G"):
        assert (getattr(prob, name) != getattr(p0, name)).nnz == 0
    with pytest.raises(ValueError):
        from_document({"format": "other", "version": 1})
