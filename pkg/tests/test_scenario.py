import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from essplan.scenario import (
    Scenario, ScenarioError, ScenarioSet, deterministic, load_scenarios, normalize_weights, stress_load,
)


def _set(weights, hours=4):
    return ScenarioSet(tuple(Scenario(str(i), w, (1.0,) * hours, {"pv": (0.0,) * hours})
                             for i, w in enumerate(weights)), hours)


def test_bundled_twelve_equal(scen12):
    s = normalize_weights(scen12)
    assert len(s.scenarios) == 12
    assert all(sc.weight == 1 / 12 for sc in s.scenarios)
    assert s.hours_per_day == 24


def test_summer_noon_pv(scen12):
    summer = next(s for s in scen12.scenarios if s.id == "summer-clear")
    assert summer.pv("pv", 11) == pytest.approx(0.8)


def test_flat_single_scenario():
    s = deterministic(24, 1.0)
    assert len(s.scenarios) == 1 and s.scenarios[0].load_scale == (1.0,) * 24


def test_short_profile_reports_hour(tmp_path):
    doc = {"hours_per_day": 24, "scenarios": [{"id": "a", "weight": 1, "load_scale": [1.0] * 23}]}
    p = tmp_path / "s.json"
    p.write_text(json.dumps(doc))
    with pytest.raises(ScenarioError, match="hour index 23"):
        load_scenarios(p)


def test_missing_weight(tmp_path):
    p = tmp_path / "s.json"
    p.write_text(json.dumps({"scenarios": [{"id": "a", "load_scale": [1.0] * 24}]}))
    with pytest.raises(ScenarioError, match="weight"):
        load_scenarios(p)


@pytest.mark.parametrize("weights, expected", [
    ((2,) * 12, (1 / 12,) * 12),
    ((1, 3), (0.25, 0.75)),
])
def test_normalize(weights, expected):
    got = tuple(s.weight for s in normalize_weights(_set(weights)).scenarios)
    assert got == pytest.approx(expected, abs=1e-15)
    assert abs(sum(got) - 1) <= 1e-12


def test_normalize_all_zero():
    with pytest.raises(ScenarioError):
        normalize_weights(_set((0, 0)))


@given(st.lists(st.floats(0.01, 100), min_size=1, max_size=8))
def test_normalize_idempotent(ws):
    once = normalize_weights(_set(ws))
    assert normalize_weights(once) == once


def test_stress_window_only(scen12):
    s = stress_load(scen12, 1.10, (17, 24))
    for a, b in zip(scen12.scenarios, s.scenarios):
        assert b.load_scale[:16] == a.load_scale[:16]
        assert np.allclose(b.load_scale[16:], np.array(a.load_scale[16:]) * 1.10, rtol=0, atol=1e-15)


def test_stress_identity(scen12):
    assert stress_load(scen12, 1.0) == scen12


@settings(max_examples=30)
@given(st.floats(0.5, 1.5), st.floats(0.5, 1.5))
def test_stress_composes(f1, f2):
    s = deterministic(24, 0.8)
    a = stress_load(stress_load(s, f1), f2)
    b = stress_load(s, f1 * f2)
    assert np.allclose(a.scenarios[0].load_scale, b.scenarios[0].load_scale, rtol=1e-12, atol=0)


@pytest.mark.parametrize("window", [(0, 24), (18, 17), (17, 25)])
def test_stress_bad_window(window):
    with pytest.raises(ScenarioError, match="window"):
        stress_load(deterministic(24), 1.1, window)
