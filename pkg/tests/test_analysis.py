import json

import numpy as np
import pytest

from essplan import analysis
from essplan.analysis import (
    AnalysisError, StressConfig, arbitrage_profile, bisect_frontier, congestion_report, congested_lines,
    cost_comparison, fix_investment, solve_plan, stress_sweep, summary, voltage_report, weakest_bus, write_reports,
)
from essplan.instances import day_profiles, feeder
from essplan.model import BuildOptions, build
from essplan.scenario import deterministic, stress_load


@pytest.fixture(scope="module")
def small_ess():
    return solve_plan(feeder(4, seed=4, pv_bus=3), day_profiles(4, 2, seed=4), BuildOptions("ess"))


@pytest.fixture(scope="module")
def small_rpc():
    return solve_plan(feeder(4, seed=4, pv_bus=3), day_profiles(4, 2, seed=4), BuildOptions("rpc"))


def test_fmt():
    assert analysis.fmt(0.1 + 0.2) == "0.3"
    assert analysis.fmt(-0.0) == "0"
    assert analysis.fmt(True) == "1"
    assert analysis.fmt(np.int64(4)) == "4"
    assert analysis.fmt(float("nan")) == "nan"
    assert analysis.fmt(None) == ""


def test_bisect_on_synthetic_predicate():
    calls = []

    def ok(f):
        calls.append(f)
        return f <= 1.37
    assert bisect_frontier(ok, 1.0, 2.0, 0.01) == 1.37
    assert len(calls) < 12
    assert bisect_frontier(lambda f: True, 1.0, 1.5, 0.1) == 1.5
    assert bisect_frontier(lambda f: False, 1.0, 1.5, 0.1) is None


def test_sweep_agrees_with_bisection():
    case, scen = feeder(4, seed=3), day_profiles(3, 1, seed=3)
    conf = StressConfig(window=(2, 3), step=0.1, max_factor=4.0, modes=("rpc",))
    table = stress_sweep(case, scen, conf)
    assert table.first_infeasible["rpc"] is not None

    def feasible(f):
        return solve_plan(case, stress_load(scen, f, conf.window), BuildOptions("rpc")).feasible
    assert bisect_frontier(feasible, 1.0, conf.max_factor, conf.step) == table.frontier["rpc"]
    assert [r["factor"] for r in table.rows][-1] == table.first_infeasible["rpc"]
    assert table.congested_at("rpc", 1.0) is not None
    assert table.congested_at("rpc", 99.0) is None


def test_stress_config_validation():
    with pytest.raises(AnalysisError):
        StressConfig(step=0.0)
    with pytest.raises(AnalysisError):
        StressConfig(max_factor=0.9)
    with pytest.raises(AnalysisError):
        StressConfig(ess_hold="sometimes")
    assert StressConfig(step=0.25, max_factor=2.0).factors() == [1.0, 1.25, 1.5, 1.75, 2.0]
    assert StressConfig(step=0.01, max_factor=1.05).factors()[-1] == 1.05


def test_soe_recursion_and_cycle(small_ess):
    assert small_ess.sites()
    bus = small_ess.sites()[0][0]
    ess = {e.bus: e for e in small_ess.model.case.ess_candidates}[bus]
    for w in range(2):
        a = arbitrage_profile(small_ess, w)
        e, ch, dis = np.array(a["soe"]), np.array(a["charge"]), np.array(a["discharge"])
        assert len(e) == len(ch) + 1
        np.testing.assert_allclose(e[1:], e[:-1] + ess.eta_ch * ch - dis / ess.eta_dis, atol=1e-9)
        assert e[-1] == e[0]
        assert np.max(ch * dis) == 0.0


def test_flat_price_means_no_throughput():
    # linear cost and negligible losses: cycling only burns efficiency and wear
    case = feeder(3, seed=1)
    case = type(case)(case.buses, tuple(type(b)(b.from_bus, b.to_bus, 1e-6, 1e-6, b.s_max) for b in case.branches),
                      tuple(type(g)(g.bus, 0.0, 30.0, 0.0, g.p_min, g.p_max, g.q_min, g.q_max) for g in case.generators),
                      case.pv_units, case.rpcs, case.ess_candidates, name="flat")
    res = solve_plan(case, deterministic(4), BuildOptions("ess"), sites={case.ess_candidates[0].bus: None})
    a = arbitrage_profile(res, 0)
    assert max(a["charge"]) <= 1e-7 and max(a["discharge"]) <= 1e-7


def test_kwh_conversion(small_ess):
    doc = summary(small_ess)
    kwh = 1000.0 * small_ess.model.case.s_base
    (bus, e), = small_ess.sites()
    assert doc["sited_bus"] == bus
    assert doc["capacity_kwh"] == pytest.approx(e * kwh)
    row, = cost_comparison([("ess", small_ess)])
    assert row["capacity_kwh"] == pytest.approx(e * kwh)
    assert row["total_cost"] == pytest.approx(small_ess.objective, rel=1e-9)


def test_cost_parts_add_up(small_ess, small_rpc):
    for res in (small_ess, small_rpc):
        br = res.breakdown()
        assert br["generation"] + br["investment"] + br["operation"] == pytest.approx(res.objective, rel=1e-9)
    assert small_rpc.breakdown()["investment"] == 0.0


def test_voltage_views_agree(small_rpc):
    bus, v, sid, hour = weakest_bus(small_rpc)
    rep = voltage_report(small_rpc, sid, hour)
    assert rep["min_bus"] == bus and rep["min_v"] == v
    for w in range(2):
        for t in range(1, 5):
            assert min(voltage_report(small_rpc, w, t)["v"]) >= v


def test_congestion_report_order(small_rpc):
    rows = congestion_report(small_rpc, 0, 1)
    loads = [r["loading"] for r in rows]
    assert loads == sorted(loads, reverse=True)
    assert congested_lines(small_rpc, threshold=0.0) == [1, 2, 3]
    assert congested_lines(small_rpc, threshold=10.0) == []


@pytest.mark.parametrize("call", [
    lambda r: voltage_report(r, 0, 0),
    lambda r: voltage_report(r, 0, 5),
    lambda r: voltage_report(r, "nope", 1),
    lambda r: voltage_report(r, 7, 1),
    lambda r: arbitrage_profile(r, 0),
])
def test_projection_errors(small_rpc, call):
    with pytest.raises(AnalysisError):
        call(small_rpc)


def test_fixed_investment_needs_ess_mode():
    with pytest.raises(AnalysisError):
        solve_plan(feeder(3), deterministic(1), BuildOptions("rpc"), sites={3: None})


def test_fix_investment_pins_columns():
    model = build(feeder(3), deterministic(2), BuildOptions("ess"))
    fixed = fix_investment(model, {3: 0.25})
    y, E = model.vs.col("y", 3), model.vs.col("E", 3)
    assert fixed.problem.lb[y] == fixed.problem.ub[y] == 1.0
    assert fixed.problem.lb[E] == fixed.problem.ub[E] == 0.25
    assert model.problem.ub[y] == 1.0 and model.problem.lb[y] == 0.0


def test_reports_are_reproducible(small_ess, tmp_path):
    a = write_reports(small_ess, tmp_path / "a")
    b = write_reports(small_ess, tmp_path / "b")
    assert [p.name for p in a] == [p.name for p in b]
    for pa, pb in zip(a, b):
        assert pa.read_bytes() == pb.read_bytes()
    doc = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert "runtime" not in json.dumps(doc)
    assert (tmp_path / "a" / "costs.csv").read_text().splitlines()[0].endswith(",gap")


def test_infeasible_summary(tmp_path):
    res = solve_plan(feeder(3), deterministic(2, load=40.0), BuildOptions("rpc"))
    assert not res.feasible
    doc = summary(res)
    assert doc["status"] == "infeasible" and "objective" not in doc
    written = write_reports(res, tmp_path)
    assert [p.name for p in written] == ["summary.json", "costs.csv"]
