import numpy as np
import pytest

from essplan.bnb import BranchingError, MipOptions, branching_rule, brute_force, solve_miqcp, tighten_indicators
from essplan.instances import day_profiles, feeder, oracle_instances
from essplan.model import BuildOptions, build
from essplan.scenario import deterministic

SMALL = oracle_instances()[:3]


def complementarity(model, x):
    ch, dis = x[model.vs.cols("pch")], x[model.vs.cols("pdis")]
    return float(np.max(ch * dis, initial=0.0))


@pytest.mark.parametrize("values, expected", [
    ({3: 0.5, 7: 0.2}, 3),             # most fractional wins
    ({3: 0.2, 7: 0.8}, 3),             # tie on fractionality goes to the lower id
    ({3: 0.0, 7: 1.0}, None),          # all integral
    ({3: 0.4, 9: 0.1}, 9),             # siting binary before indicators
    ({3: 1e-8, 7: 1 - 1e-8}, None),    # within the integrality tolerance
])
def test_branching_rule(values, expected):
    kinds = {3: "xch", 7: "xdis", 9: "y"}
    assert branching_rule(values, kinds) == expected


def test_zero_binaries_is_one_node():
    model = build(feeder(3), day_profiles(2, 1), BuildOptions("rpc"))
    assert model.n_binaries == 0
    sol = solve_miqcp(model)
    assert sol.status == "optimal"
    assert sol.nodes == 1
    assert sol.bound == sol.objective


def test_one_unit_one_hour_has_three_binaries():
    model = build(feeder(2), deterministic(1), BuildOptions("ess"))
    assert model.n_binaries == 3
    sol = solve_miqcp(model)
    ref = brute_force(model)
    assert sol.objective == pytest.approx(ref.objective, rel=1e-6)


@pytest.fixture(scope="module")
def oracle_runs():
    out = []
    for name, case, scen in SMALL:
        model = build(case, scen, BuildOptions("ess"))
        out.append((name, model, solve_miqcp(model), brute_force(model)))
    return out


def test_matches_enumeration(oracle_runs):
    for name, model, sol, ref in oracle_runs:
        assert sol.status == "optimal", name
        tol = max(1e-6, 1e-4 * abs(ref.objective))
        assert abs(sol.objective - ref.objective) <= tol, name
        assert sol.bound <= sol.objective + 1e-9


def test_incumbent_is_feasible_and_integral(oracle_runs):
    for name, model, sol, _ in oracle_runs:
        xb = sol.x[model.binaries]
        assert np.all((xb == 0.0) | (xb == 1.0)), name
        assert complementarity(model, sol.x) == 0.0, name
        xch, xdis = sol.x[model.vs.cols("xch")], sol.x[model.vs.cols("xdis")]
        assert np.all(xch + xdis <= 1.0)
        viol = model.problem.primal_violation(sol.x)
        assert max(viol.values()) <= 1e-7, (name, viol)


def test_children_bound_at_least_parent(oracle_runs):
    for name, model, sol, _ in oracle_runs:
        obj = {nid: o for nid, _, o in sol.node_bounds}
        for nid, parent, o in sol.node_bounds:
            if parent in obj:
                assert o >= obj[parent] - 1e-6 * max(1.0, abs(o)), name


def test_progress_lines(oracle_runs):
    for name, model, sol, _ in oracle_runs:
        assert sol.history and sol.history[0].startswith("node=1 ")
        assert len(sol.history) <= sol.nodes


def test_deterministic():
    _, case, scen = SMALL[1]
    model = build(case, scen, BuildOptions("ess"))
    a, b = solve_miqcp(model), solve_miqcp(model)
    assert a.x.tobytes() == b.x.tobytes()
    assert a.history == b.history


def test_infeasible_instance():
    case = feeder(3)
    heavy = deterministic(2, load=40.0)
    sol = solve_miqcp(build(case, heavy, BuildOptions("ess")))
    assert sol.status == "infeasible" and sol.x is None
    assert brute_force(build(case, heavy, BuildOptions("ess"))).status == "infeasible"


def test_node_limit():
    _, case, scen = SMALL[2]
    sol = solve_miqcp(build(case, scen, BuildOptions("ess")), MipOptions(max_nodes=1))
    assert sol.nodes <= 1
    assert sol.status in ("node-limit", "optimal")
    if sol.x is not None:
        assert sol.bound <= sol.objective + 1e-9


def test_enumeration_limit():
    model = build(feeder(3), day_profiles(12, 1), BuildOptions("ess"))
    with pytest.raises(BranchingError):
        brute_force(model)


def test_indicator_tightening_logged():
    model = build(feeder(3, e_max=0.2), day_profiles(2, 1), BuildOptions("ess"))
    prob, reductions = tighten_indicators(model)
    assert len(reductions) == 2
    assert reductions[0] == "charge_limit at bus 3: indicator coefficient 0.5 -> 0.235294"
    assert reductions[1] == "discharge_limit at bus 3: indicator coefficient 0.5 -> 0.18"
    # same optimum as without the reduction
    sol = solve_miqcp(model)
    assert sol.objective == pytest.approx(brute_force(model).objective, rel=1e-6)
