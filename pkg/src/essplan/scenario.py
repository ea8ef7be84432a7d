"""Weighted representative days with hourly load and PV shapes."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path

import numpy as np


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class Scenario:
    id: str
    weight: float
    load_scale: tuple[float, ...]
    pv_output: dict[str, tuple[float, ...]]

    def pv(self, key: str, t: int) -> float:
        """PV output for profile ``key`` at 0-based hour ``t``."""
        if key in self.pv_output:
            return self.pv_output[key][t]
        if len(self.pv_output) == 1:
            return next(iter(self.pv_output.values()))[t]
        raise ScenarioError(f"scenario {self.id}: no PV profile '{key}'")


@dataclass(frozen=True)
class ScenarioSet:
    scenarios: tuple[Scenario, ...]
    hours_per_day: int = 24

    def __len__(self) -> int:
        return len(self.scenarios)

    def __iter__(self):
        return iter(self.scenarios)

    @property
    def weights(self) -> np.ndarray:
        return np.array([s.weight for s in self.scenarios])


def _series(values, sid, what, hours) -> tuple[float, ...]:
    if not isinstance(values, list):
        raise ScenarioError(f"scenario {sid}: '{what}' must be a list of {hours} numbers")
    for h, v in enumerate(values):
        if h >= hours:
            raise ScenarioError(f"scenario {sid}: '{what}' has an extra value at hour index {h}")
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not np.isfinite(v):
            raise ScenarioError(f"scenario {sid}: '{what}' hour index {h} is not a finite number")
        if v < 0:
            raise ScenarioError(f"scenario {sid}: '{what}' hour index {h} is negative")
    if len(values) < hours:
        raise ScenarioError(f"scenario {sid}: '{what}' is missing hour index {len(values)}")
    return tuple(float(v) for v in values)


def scenarios_from_dict(doc: dict) -> ScenarioSet:
    if not isinstance(doc, dict) or not isinstance(doc.get("scenarios"), list):
        raise ScenarioError("scenario document needs a 'scenarios' list")
    hours = int(doc.get("hours_per_day", 24))
    if hours < 1:
        raise ScenarioError("hours_per_day must be positive")
    out = []
    for n, s in enumerate(doc["scenarios"]):
        sid = str(s.get("id", n + 1))
        if "weight" not in s:
            raise ScenarioError(f"scenario {sid}: missing field 'weight'")
        w = s["weight"]
        if isinstance(w, bool) or not isinstance(w, (int, float)) or not np.isfinite(w) or w < 0:
            raise ScenarioError(f"scenario {sid}: weight must be a nonnegative number")
        if "load_scale" not in s:
            raise ScenarioError(f"scenario {sid}: missing field 'load_scale'")
        load = _series(s["load_scale"], sid, "load_scale", hours)
        raw_pv = s.get("pv_output", [0.0] * hours)
        if isinstance(raw_pv, dict):
            pv = {k: _series(v, sid, f"pv_output.{k}", hours) for k, v in raw_pv.items()}
        else:
            pv = {"pv": _series(raw_pv, sid, "pv_output", hours)}
        out.append(Scenario(sid, float(w), load, pv))
    if not out:
        raise ScenarioError("scenario document contains no scenarios")
    if len({s.id for s in out}) != len(out):
        raise ScenarioError("scenario ids must be unique")
    return ScenarioSet(tuple(out), hours)


def load_scenarios(path) -> ScenarioSet:
    """Read a scenario file; weights are returned as stored (see :func:`normalize_weights`)."""
    path = Path(path)
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ScenarioError(f"{path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    return scenarios_from_dict(doc)


def scenarios_to_dict(sset: ScenarioSet) -> dict:
    return {
        "hours_per_day": sset.hours_per_day,
        "scenarios": [
            {
                "id": s.id,
                "weight": s.weight,
                "load_scale": list(s.load_scale),
                "pv_output": list(s.pv_output["pv"]) if list(s.pv_output) == ["pv"] else {k: list(v) for k, v in s.pv_output.items()},
            }
            for s in sset.scenarios
        ],
    }


def normalize_weights(sset: ScenarioSet) -> ScenarioSet:
    """Scale weights to sum to one.

    Division is done in exact rationals so that proportional weight vectors
    (e.g. all 2s versus all 1s) map to bit-identical probabilities.
    """
    exact = [Fraction(s.weight) for s in sset.scenarios]
    total = sum(exact)
    if total <= 0:
        raise ScenarioError("cannot normalize: all scenario weights are zero")
    if abs(math.fsum(s.weight for s in sset.scenarios) - 1.0) <= 1e-14:
        return sset
    return replace(
        sset, scenarios=tuple(replace(s, weight=float(w / total)) for s, w in zip(sset.scenarios, exact))
    )


def deterministic(hours: int = 24, load: float = 1.0, pv: float = 0.0) -> ScenarioSet:
    """Single scenario with flat profiles."""
    return ScenarioSet((Scenario("1", 1.0, (float(load),) * hours, {"pv": (float(pv),) * hours}),), hours)


def stress_load(sset: ScenarioSet, factor: float, window=(17, 24)) -> ScenarioSet:
    """Scale load in the 1-based inclusive hour window by ``factor``."""
    lo, hi = window
    if not (1 <= lo <= hi <= sset.hours_per_day):
        raise ScenarioError(f"invalid stress window {window} for {sset.hours_per_day} hours")
    if not factor > 0:
        raise ScenarioError("stress factor must be positive")
    out = []
    for s in sset.scenarios:
        load = list(s.load_scale)
        for h in range(lo - 1, hi):
            load[h] = load[h] * factor
        out.append(replace(s, load_scale=tuple(load)))
    return replace(sset, scenarios=tuple(out))
