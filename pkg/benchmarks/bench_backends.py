"""Compare the compiled kernels with the pure NumPy/SciPy fallback.

Times the continuous relaxation of a few planning models under both
backends and checks that they agree on the optimum.

    python benchmarks/bench_backends.py [--repeat 3] [--hours 24]
"""

from __future__ import annotations

import argparse
import statistics
import time

from essplan.cli import bundled
from essplan.conic import BACKEND, solve_conic, use_backend
from essplan.instances import day_profiles, feeder
from essplan.model import BuildOptions, build
from essplan.network import load_case
from essplan.scenario import deterministic, load_scenarios

CONFIGS = {"compiled": ("compiled", "ldl"), "numpy": ("numpy", "splu")}


def models(hours: int):
    case = load_case(bundled("case33.json"))
    scen = load_scenarios(bundled("scenarios.json"))
    yield "feeder5 ess", build(feeder(5, seed=6), day_profiles(hours, 2, seed=6), BuildOptions("ess"))
    yield "case33 rpc 1 day", build(case, deterministic(hours, load=0.8), BuildOptions("rpc"))
    yield "case33 ess 1 day", build(case, deterministic(hours, load=0.8), BuildOptions("ess"))
    first = type(scen)(scen.scenarios[:2], scen.hours_per_day)
    yield "case33 ess 2 days", build(case, first, BuildOptions("ess"))


def run(prob, name: str, repeat: int):
    backend, fact = CONFIGS[name]
    prev = use_backend(backend)
    try:
        times, sol = [], None
        for _ in range(repeat):
            t0 = time.perf_counter()
            sol = solve_conic(prob, factorization=fact)
            times.append(time.perf_counter() - t0)
    finally:
        use_backend(prev)
    return statistics.median(times), sol


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--hours", type=int, default=24)
    args = ap.parse_args(argv)
    names = list(CONFIGS) if BACKEND == "compiled" else ["numpy"]
    print(f"{'model':<20} {'cols':>7} " + " ".join(f"{n + ' [s]':>14}" for n in names) + f" {'speedup':>8} {'obj diff':>9}")
    for label, model in models(args.hours):
        res = {n: run(model.problem, n, args.repeat) for n in names}
        t = [res[n][0] for n in names]
        line = f"{label:<20} {model.vs.n:>7} " + " ".join(f"{v:14.3f}" for v in t)
        if len(names) == 2:
            a, b = res["compiled"][1], res["numpy"][1]
            line += f" {t[1] / t[0]:8.2f} {abs(a.objective - b.objective):9.1e}"
        print(line)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
