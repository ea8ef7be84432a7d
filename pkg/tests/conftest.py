import copy
import json
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from essplan.cli import bundled  # noqa: E402
from essplan.network import load_case  # noqa: E402
from essplan.scenario import load_scenarios  # noqa: E402


@pytest.fixture(scope="session")
def case33():
    return load_case(bundled("case33.json"))


@pytest.fixture(scope="session")
def scen12():
    return load_scenarios(bundled("scenarios.json"))


@pytest.fixture
def case33_doc():
    return copy.deepcopy(json.loads(bundled("case33.json").read_text()))


def two_bus_doc(p=1.0, q=0.5, r=0.01, x=0.01, v_min=0.9, gen=(0.0, 10.0, 5.0)):
    """Slack plus one load bus behind a single line."""
    a, b, c = gen
    return {
        "base": {"s_base": 1.0, "v_base": 12.66},
        "buses": [{"id": 1, "slack": True, "v_min": 0.95, "v_max": 1.05},
                  {"id": 2, "p_load": p, "q_load": q, "v_min": v_min, "v_max": 1.1}],
        "branches": [{"from": 1, "to": 2, "r": r, "x": x, "s_max": 10.0}],
        "generators": [{"bus": 1, "a": a, "b": b, "c": c, "p_min": 0, "p_max": 10, "q_min": -10, "q_max": 10}],
    }


def pytest_terminal_summary(terminalreporter):
    import acceptance_record

    if not acceptance_record.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in acceptance_record.lines():
        terminalreporter.write_line(line)
