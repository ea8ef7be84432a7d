import json
from pathlib import Path

import numpy as np
import pytest
import scipy.sparse as sp

from essplan.conic import (
    INFEASIBLE, OPTIMAL, ConicProblem, Multipliers, Tolerances, check_exactness, cone_violation, kkt_residuals,
    presolve, solve_conic, verify_certificate,
)
from essplan.model import BuildOptions, build
from essplan.network import case_from_dict
from essplan.scenario import deterministic
from conftest import two_bus_doc
from conic_cases import random_socp

REFERENCE = json.loads((Path(__file__).parent / "data" / "socp_reference.json").read_text())
SEEDS = range(20)


def weak_duality_defect(rec):
    # pobj - dobj splits into the complementarity s'z >= 0 plus residual terms
    return rec["pobj"] - rec["dobj"] - (rec["xr"] - rec["zr"])


def test_cone_violation_examples():
    s = np.array([1.0, 0.6, 0.8, 2.0, 3.0, 0.0, 0.0])
    v = cone_violation(s, np.array([3, 4]))
    assert v[0] == pytest.approx(0.0, abs=1e-15)
    assert v[1] == pytest.approx(1.0)
    assert cone_violation(np.zeros(0), np.array([])).size == 0


def test_lp_closed_form():
    # min x0 + 2 x1  s.t. x0 + x1 = 1, x >= 0   ->  x = (1, 0)
    A = sp.csr_matrix([[1.0, 1.0]])
    prob = ConicProblem(np.zeros(2), np.array([1.0, 2.0]), A, np.array([1.0]), sp.csr_matrix((0, 2)), np.zeros(0),
                        np.zeros(2), np.full(2, np.inf), sp.csr_matrix((0, 2)), np.zeros(0), [])
    sol = solve_conic(prob)
    assert sol.status == OPTIMAL
    assert sol.objective == pytest.approx(1.0, abs=1e-8)
    np.testing.assert_allclose(sol.x, [1.0, 0.0], atol=1e-8)


def test_norm_ball_closed_form():
    # min c'x over ||x|| <= 2  ->  -2 ||c||
    c = np.array([3.0, -4.0])
    G = sp.csr_matrix(np.vstack([np.zeros(2), -np.eye(2)]))
    h = np.array([2.0, 0.0, 0.0])
    prob = ConicProblem(np.zeros(2), c, sp.csr_matrix((0, 2)), np.zeros(0), sp.csr_matrix((0, 2)), np.zeros(0),
                        np.full(2, -np.inf), np.full(2, np.inf), G, h, [3])
    sol = solve_conic(prob)
    assert sol.status == OPTIMAL
    assert sol.objective == pytest.approx(-10.0, abs=1e-7)
    np.testing.assert_allclose(sol.x, -2 * c / 5, atol=1e-7)


@pytest.mark.parametrize("seed", SEEDS)
def test_random_socp_matches_reference(seed):
    prob = random_socp(seed)
    sol = solve_conic(prob)
    assert sol.status == OPTIMAL
    ref = REFERENCE["objective"][str(seed)]
    assert sol.objective == pytest.approx(ref, rel=1e-7, abs=1e-7)
    res = kkt_residuals(prob, sol.x, sol.duals)
    assert max(res["primal"], res["dual"], res["gap"]) <= 1e-8
    viol = prob.primal_violation(sol.x)
    assert max(viol.values()) <= 1e-8


@pytest.mark.parametrize("seed", SEEDS)
def test_weak_duality_every_iterate(seed):
    sol = solve_conic(random_socp(seed))
    assert sol.history
    for rec in sol.history:
        scale = max(1.0, abs(rec["pobj"]))
        assert rec["comp"] >= -1e-12 * scale
        assert weak_duality_defect(rec) >= -1e-9 * scale
        # and the decomposition itself is an identity
        assert weak_duality_defect(rec) - rec["comp"] == pytest.approx(0.0, abs=1e-9 * scale)


@pytest.mark.parametrize("seed", SEEDS)
@pytest.mark.parametrize("use_presolve", [True, False])
def test_infeasible_variant_certificate(seed, use_presolve):
    prob = random_socp(seed, feasible=False)
    sol = solve_conic(prob, use_presolve=use_presolve)
    assert sol.status == INFEASIBLE
    assert sol.x is None
    assert verify_certificate(prob, sol.certificate).ok(1e-6)


def test_certificate_rejects_zero_multipliers():
    prob = random_socp(0, feasible=False)
    assert not verify_certificate(prob, Multipliers.zeros(prob)).ok(1e-6)


def contradictory_model():
    # the load bus must sit above the substation's upper limit while drawing power
    doc = two_bus_doc(v_min=1.06)
    return build(case_from_dict(doc), deterministic(1), BuildOptions("none"))


@pytest.mark.parametrize("use_presolve", [True, False])
def test_contradictory_voltage_bounds(use_presolve):
    prob = contradictory_model().problem
    sol = solve_conic(prob, use_presolve=use_presolve)
    assert sol.status == INFEASIBLE
    check = verify_certificate(prob, sol.certificate)
    assert check.ok(1e-6), check


def test_presolve_detects_crossed_bounds():
    prob = random_socp(3, feasible=False)
    sol = solve_conic(prob)
    assert sol.iterations == 0
    assert "reason" in sol.presolve_log


def test_presolve_preserves_solution():
    model = build(case_from_dict(two_bus_doc()), deterministic(2), BuildOptions("none"))
    a = solve_conic(model.problem)
    b = solve_conic(model.problem, use_presolve=False)
    assert a.objective == pytest.approx(b.objective, rel=1e-8)
    pre = presolve(model.problem)
    assert pre.problem.n <= model.problem.n


def test_two_bus_analytic():
    # the relaxation of one lossy line is tight: l = (p^2 + q^2) / w at the optimum
    r, x, p, q = 0.01, 0.02, 1.0, 0.5
    model = build(case_from_dict(two_bus_doc(p=p, q=q, r=r, x=x, gen=(0.0, 1.0, 0.0))), deterministic(1),
                  BuildOptions("none"))
    sol = solve_conic(model.problem)
    assert sol.status == OPTIMAL
    P, Q, L = (float(sol.x[model.vs.cols(k)].ravel()[0]) for k in ("P", "Q", "L"))
    W = sol.x[model.vs.cols("W")].ravel()
    assert P - r * L == pytest.approx(p, abs=1e-8)
    assert Q - x * L == pytest.approx(q, abs=1e-8)
    assert L * W[0] == pytest.approx(P * P + Q * Q, abs=1e-7)
    # the substation holds 1.0 p.u.; the receiving end follows the drop equation
    assert W[0] == pytest.approx(1.0, abs=1e-9)
    assert W[1] == pytest.approx(W[0] - 2 * (r * P + x * Q) + (r * r + x * x) * L, abs=1e-8)
    rep = check_exactness(model.problem, sol.x)
    assert rep.tight


def test_objective_scaling_invariance():
    prob = random_socp(5)
    a = solve_conic(prob)
    b = solve_conic(prob.copy(P=100 * prob.P, c=100 * prob.c))
    np.testing.assert_allclose(a.x, b.x, atol=1e-6)
    assert b.objective == pytest.approx(100 * a.objective, rel=1e-7)


def test_exactness_flags_slack_cone():
    model = build(case_from_dict(two_bus_doc()), deterministic(1), BuildOptions("none"))
    sol = solve_conic(model.problem)
    x = sol.x.copy()
    rep = check_exactness(model.problem, x)
    assert rep.tight and "tight" in rep.describe()
    x[model.vs.cols("L")] += 0.5  # inflate the current: cone now slack
    rep = check_exactness(model.problem, x)
    assert not rep.tight
    assert list(rep.flagged) == [0]
    assert rep.max_residual > 0.4
    assert "not tight" in rep.describe()


def test_iteration_stream(capsys):
    import sys

    solve_conic(random_socp(1), stream=sys.stdout)
    out = capsys.readouterr().out.splitlines()
    assert out[0].split()[:3] == ["it", "pobj", "dobj"]
    assert len(out) >= 3


def test_tolerances_control_accuracy():
    prob = random_socp(2)
    loose = solve_conic(prob, Tolerances(feas=1e-4, gap=1e-4))
    tight = solve_conic(prob)
    assert loose.iterations <= tight.iterations
    assert loose.objective == pytest.approx(tight.objective, abs=1e-3)


@pytest.mark.parametrize("seed", [0, 7, 13])
def test_fallback_backend_agrees(seed):
    from essplan.conic import BACKEND, use_backend

    if BACKEND != "compiled":
        pytest.skip("compiled kernels not built")
    prob = random_socp(seed)
    a = solve_conic(prob)
    prev = use_backend("numpy")
    try:
        b = solve_conic(prob, factorization="splu")
    finally:
        use_backend(prev)
    assert b.status == OPTIMAL
    assert b.objective == pytest.approx(a.objective, rel=1e-8, abs=1e-8)
    np.testing.assert_allclose(b.x, a.x, atol=1e-6)


def test_backend_switch_validation():
    from essplan.conic import use_backend

    with pytest.raises(ValueError):
        use_backend("fortran")
