"""Small synthetic feeders for verification and benchmarking."""

from __future__ import annotations

import numpy as np

from .network import Branch, Bus, EssCandidate, Generator, NetworkCase, PvUnit, Rpc
from .scenario import Scenario, ScenarioSet


def feeder(n_bus: int = 4, seed: int = 0, ess_bus: int | None = None, pv_bus: int | None = None,
           e_max: float = 0.6, lateral: bool = True) -> NetworkCase:
    """Radial feeder with a quadratic-cost substation and one storage candidate.

    Buses beyond the third hang off bus 2 when ``lateral`` is set, so that the
    topology is a tree rather than a path.
    """
    rng = np.random.default_rng(seed)
    buses = [Bus(1, 0.0, 0.0, 0.95**2, 1.05**2, True)]
    for i in range(2, n_bus + 1):
        p = float(np.round(rng.uniform(0.15, 0.4), 3))
        buses.append(Bus(i, p, float(np.round(0.4 * p, 3)), 0.92**2, 1.05**2, False))
    branches = []
    for i in range(2, n_bus + 1):
        parent = 2 if (lateral and i > 3) else i - 1
        r = float(np.round(rng.uniform(0.005, 0.02), 4))
        x = float(np.round(rng.uniform(0.005, 0.02), 4))
        branches.append(Branch(parent, i, r, x, 2.0))
    gens = [Generator(1, 1.0, 30.0, 25.0, 0.0, 5.0, -3.0, 3.0)]
    ess_bus = n_bus if ess_bus is None else ess_bus
    ess = (EssCandidate(ess_bus, e_max, 0.5, 0.5, 0.2, 0.2, 0.85, 0.90, 250.0, 0.005),)
    pv = (PvUnit(pv_bus, "pv", 1.0),) if pv_bus else ()
    return NetworkCase(tuple(buses), tuple(branches), tuple(gens), pv, (Rpc(n_bus, -0.1, 0.1),), ess,
                       name=f"feeder{n_bus}-{seed}")


def day_profiles(hours: int = 4, n_scen: int = 2, seed: int = 0, cheap: int | None = None) -> ScenarioSet:
    """Load profiles with ``cheap`` low-load hours followed by a peak."""
    rng = np.random.default_rng(seed + 1000)
    cheap = hours // 2 if cheap is None else cheap
    out = []
    for s in range(n_scen):
        base = np.concatenate([np.full(cheap, 0.5), np.full(hours - cheap, 1.3)])
        load = np.round(base * rng.uniform(0.9, 1.1, hours), 3)
        pv = np.round(np.clip(rng.uniform(-0.05, 0.15, hours), 0, None), 3)
        out.append(Scenario(str(s + 1), 1.0, tuple(float(v) for v in load), {"pv": tuple(float(v) for v in pv)}))
    return ScenarioSet(tuple(out), hours)


def oracle_instances():
    """(name, case, scenarios) triples with at most 11 binaries each (fast to enumerate)."""
    return [
        ("2bus-3h", feeder(2, seed=1), day_profiles(3, 1, seed=1)),
        ("3bus-4h", feeder(3, seed=2), day_profiles(4, 1, seed=2)),
        ("4bus-2h-2s", feeder(4, seed=3), day_profiles(2, 2, seed=3)),
        ("4bus-4h-pv", feeder(4, seed=4, pv_bus=3), day_profiles(4, 1, seed=4)),
        ("5bus-5h", feeder(5, seed=5, ess_bus=4), day_profiles(5, 1, seed=5, cheap=2)),
        ("5bus-2h-2s", feeder(5, seed=6), day_profiles(2, 2, seed=6)),
    ]
