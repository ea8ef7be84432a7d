import numpy as np
import pytest

from essplan.conic import check_exactness, solve_conic
from essplan.instances import day_profiles, feeder
from essplan.model import BuildOptions, build
from essplan.network import case_from_dict, validate_radial
from essplan.powerflow import PowerFlowError, forward_backward_sweep, replay_solution, sending_end_flows
from conftest import two_bus_doc


def test_zero_load_flat_profile(case33):
    pf = forward_backward_sweep(case33, np.zeros(33), np.zeros(33))
    np.testing.assert_allclose(pf.voltage, 1.0)
    np.testing.assert_allclose(pf.current, 0.0)


def test_two_bus_satisfies_ac_equations():
    case = case_from_dict(two_bus_doc(p=0.8, q=0.3, r=0.02, x=0.04))
    pf = forward_backward_sweep(case, [0.0, 0.8], [0.0, 0.3])
    v2, i = pf.voltage[1], pf.current[0]
    assert v2 * np.conj(i) == pytest.approx(0.8 + 0.3j, abs=1e-12)
    assert pf.voltage[0] - complex(0.02, 0.04) * i == pytest.approx(v2, abs=1e-12)


def test_slack_withdrawal_is_ignored():
    case = case_from_dict(two_bus_doc())
    a = forward_backward_sweep(case, [0.0, 0.5], [0.0, 0.1])
    b = forward_backward_sweep(case, [7.0, 0.5], [3.0, 0.1])
    np.testing.assert_array_equal(a.voltage, b.voltage)


def test_distflow_identities_hold(case33):
    topo = validate_radial(case33)
    p = np.array([b.load_p_base for b in case33.buses])
    q = np.array([b.load_q_base for b in case33.buses])
    pf = forward_backward_sweep(case33, p, q, topo=topo)
    f = sending_end_flows(case33, pf, topo)
    for j, k in topo.branch_of.items():
        br = case33.branches[k]
        i = topo.parent[j] - 1
        assert f["l"][k] * f["w"][i] == pytest.approx(f["P"][k] ** 2 + f["Q"][k] ** 2, rel=1e-10)
        drop = f["w"][i] - 2 * (br.r * f["P"][k] + br.x * f["Q"][k]) + (br.r**2 + br.x**2) * f["l"][k]
        assert f["w"][j - 1] == pytest.approx(drop, abs=1e-12)


def test_collapse_raises():
    case = case_from_dict(two_bus_doc(r=0.1, x=0.1))
    with pytest.raises(PowerFlowError):
        forward_backward_sweep(case, [0.0, 50.0], [0.0, 50.0], max_iter=50)


def test_replay_of_tight_solution():
    model = build(feeder(5, seed=2), day_profiles(3, 2), BuildOptions("rpc"))
    sol = solve_conic(model.problem)
    assert check_exactness(model.problem, sol.x).tight
    dev = replay_solution(model, sol.x)
    assert dev["w"] <= 1e-6 and dev["l"] <= 1e-6
