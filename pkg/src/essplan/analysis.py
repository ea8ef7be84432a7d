"""Planning runs and the grid-service reports derived from them.

Every report here is a projection of a solved point: values are read from
the solution vector and never recomputed by another model.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .bnb import MipOptions, solve_miqcp
from .conic import check_exactness
from .model import BuildOptions, PlanningModel, amortization_factor, build
from .network import NetworkCase
from .scenario import ScenarioSet, stress_load

CONGESTION_THRESHOLD = 0.99
AMORTIZATION_RULE = "f / (365 * lifetime_years * 24) per kWh of installed capacity and hour"


class AnalysisError(ValueError):
    pass


@dataclass
class PlanResult:
    """A solved planning model together with its run metadata."""

    label: str
    model: PlanningModel
    status: str
    x: np.ndarray | None
    objective: float
    bound: float
    gap: float
    nodes: int
    runtime: float
    flags: list = field(default_factory=list)
    reductions: list = field(default_factory=list)
    incumbents: list = field(default_factory=list)

    @property
    def mode(self) -> str:
        return self.model.options.mode

    @property
    def feasible(self) -> bool:
        return self.x is not None

    def values(self, kind: str) -> np.ndarray:
        return self.x[self.model.vs.cols(kind)]

    def sites(self) -> list[tuple[int, float]]:
        """(bus, capacity in per-unit) of every sited storage unit, by bus id."""
        if not self.feasible or not self.model.vs.elements["y"]:
            return []
        y, E = self.values("y"), self.values("E")
        return [(int(b), float(E[k])) for k, b in enumerate(self.model.vs.elements["y"]) if y[k] > 0.5]

    def breakdown(self) -> dict:
        if not self.feasible:
            return {}
        return self.model.objective_breakdown(self.x)


def fix_investment(model: PlanningModel, sites: dict) -> PlanningModel:
    """Copy of an ESS model with siting pinned to the buses in ``sites``.

    ``sites`` maps bus -> capacity; a capacity of ``None`` leaves the size
    free (up to the candidate's limit) at that bus.
    """
    vs = model.vs
    lb, ub = model.problem.lb.copy(), model.problem.ub.copy()
    for b in vs.elements["y"]:
        on = b in sites
        lb[vs.col("y", b)] = ub[vs.col("y", b)] = 1.0 if on else 0.0
        cap = sites.get(b, 0.0)
        if cap is not None:
            lb[vs.col("E", b)] = ub[vs.col("E", b)] = cap
    return replace(model, problem=model.problem.copy(lb=lb, ub=ub))


def solve_plan(case: NetworkCase, scenarios: ScenarioSet, options: BuildOptions | None = None,
               mip: MipOptions | None = None, label: str | None = None,
               sites: dict[int, float] | None = None) -> PlanResult:
    """Build and solve one configuration; ``sites`` pins an existing storage investment."""
    options = options or BuildOptions()
    model = build(case, scenarios, options)
    if sites is not None:
        if options.mode != "ess":
            raise AnalysisError("a fixed storage investment needs mode 'ess'")
        model = fix_investment(model, sites)
    t0 = time.perf_counter()
    sol = solve_miqcp(model, mip)
    return PlanResult(label or options.mode, model, sol.status, sol.x, float(sol.objective), float(sol.bound),
                      float(sol.gap) if sol.x is not None else float("nan"), sol.nodes,
                      time.perf_counter() - t0, list(sol.flags), list(sol.reductions), list(sol.incumbents))


# ---------------------------------------------------------------------------
# projections


def _check_feasible(res: PlanResult):
    if not res.feasible:
        raise AnalysisError(f"{res.label}: no feasible solution ({res.status})")


def _scenario_index(res: PlanResult, omega) -> int:
    ids = [s.id for s in res.model.scenarios.scenarios]
    if isinstance(omega, str):
        if omega not in ids:
            raise AnalysisError(f"unknown scenario {omega!r}")
        return ids.index(omega)
    if not 0 <= omega < len(ids):
        raise AnalysisError(f"scenario index {omega} out of range")
    return int(omega)


def arbitrage_profile(res: PlanResult, omega, bus: int | None = None) -> dict:
    """Hourly charge, discharge and state of energy of one storage unit.

    ``soe`` has ``T + 1`` entries: the level at the start of every hour and
    the closing level, which equals the opening one by the cyclic condition.
    """
    _check_feasible(res)
    sites = res.sites()
    if not sites:
        raise AnalysisError(f"{res.label}: solution has no storage")
    bus = sites[0][0] if bus is None else bus
    vs = res.model.vs
    if bus not in vs.elements["y"]:
        raise AnalysisError(f"bus {bus} is not a storage candidate")
    w = _scenario_index(res, omega)
    k = vs.elements["y"].index(bus)
    ch = res.values("pch")[w, :, k]
    dis = res.values("pdis")[w, :, k]
    soe = res.values("e")[w, :, k]
    return {
        "scenario": res.model.scenarios.scenarios[w].id,
        "bus": bus,
        "hour": list(range(1, vs.hours + 1)),
        "charge": ch.tolist(),
        "discharge": dis.tolist(),
        "soe": soe.tolist() + [float(soe[0])],
    }


def voltage_report(res: PlanResult, omega, t: int) -> dict:
    """Bus voltage magnitudes ``sqrt(w)`` at hour ``t`` (1-based) and the weakest bus."""
    _check_feasible(res)
    w = _scenario_index(res, omega)
    vs = res.model.vs
    if not 1 <= t <= vs.hours:
        raise AnalysisError(f"hour {t} outside 1..{vs.hours}")
    mag = np.sqrt(np.maximum(res.values("W")[w, t - 1], 0.0))
    buses = list(vs.elements["W"])
    k = int(np.argmin(mag))
    return {"scenario": res.model.scenarios.scenarios[w].id, "hour": t, "bus": buses,
            "v": mag.tolist(), "min_bus": buses[k], "min_v": float(mag[k])}


def weakest_bus(res: PlanResult) -> tuple[int, float, str, int]:
    """(bus, voltage, scenario id, hour) of the lowest voltage over the whole horizon."""
    _check_feasible(res)
    mag = np.sqrt(np.maximum(res.values("W"), 0.0))  # (S, T, n)
    w, t, k = np.unravel_index(int(np.argmin(mag)), mag.shape)
    return (res.model.vs.elements["W"][k], float(mag[w, t, k]), res.model.scenarios.scenarios[w].id, int(t) + 1)


def _loadings(res: PlanResult) -> np.ndarray:
    P, Q = res.values("P"), res.values("Q")
    smax = np.array([b.s_max for b in res.model.case.branches])
    return np.hypot(P, Q) / smax


def congestion_report(res: PlanResult, omega, t: int, threshold: float = CONGESTION_THRESHOLD) -> list[dict]:
    """Per-branch loading ``|S| / s_max`` at hour ``t``, most loaded first."""
    _check_feasible(res)
    w = _scenario_index(res, omega)
    case = res.model.case
    P, Q = res.values("P")[w, t - 1], res.values("Q")[w, t - 1]
    rows = []
    for k, br in enumerate(case.branches):
        s = float(np.hypot(P[k], Q[k]))
        load = s / br.s_max
        rows.append({"branch": k + 1, "from": br.from_bus, "to": br.to_bus, "s": s, "s_max": br.s_max,
                     "loading": load, "congested": load >= threshold})
    rows.sort(key=lambda r: (-r["loading"], r["branch"]))
    return rows


def congested_lines(res: PlanResult, threshold: float = CONGESTION_THRESHOLD) -> list[int]:
    """Branches that reach ``threshold`` loading in any scenario and hour."""
    if not res.feasible:
        return []
    hit = np.any(_loadings(res) >= threshold, axis=(0, 1))
    return [int(k) + 1 for k in np.flatnonzero(hit)]


def exactness_summary(res: PlanResult, tol: float = 1e-6) -> dict:
    _check_feasible(res)
    rep = check_exactness(res.model.problem, res.x, tol)
    return {"max_residual": rep.max_residual, "tight": rep.tight, "flagged": len(rep.flagged), "tol": tol}


def cost_comparison(cases) -> list[dict]:
    """One row per ``(label, PlanResult)``: status, sites, capacity, cost and gap."""
    rows = []
    for label, res in cases:
        sites = res.sites()
        kwh = 1000.0 * res.model.case.s_base
        br = res.breakdown()
        rows.append({
            "case": label,
            "status": res.status,
            "count": len(sites),
            "location": " ".join(str(b) for b, _ in sites),
            "capacity_kwh": sum(e for _, e in sites) * kwh,
            "total_cost": br.get("total", float("nan")),
            "generation_cost": br.get("generation", float("nan")),
            "investment_cost": br.get("investment", float("nan")),
            "operation_cost": br.get("operation", float("nan")),
            "gap": res.gap,
            "runtime": res.runtime,
        })
    return rows


# ---------------------------------------------------------------------------
# stress protocol


@dataclass
class StressConfig:
    window: tuple[int, int] = (17, 24)
    step: float = 0.01
    max_factor: float = 1.5
    modes: tuple[str, ...] = ("rpc", "ess")
    threshold: float = CONGESTION_THRESHOLD
    # what the storage runs keep from the unstressed plan: "site" re-sizes
    # the unit at the planned bus, "plan" keeps site and capacity, "none"
    # re-plans from scratch at every factor
    ess_hold: str = "site"

    def __post_init__(self):
        if self.ess_hold not in ("site", "plan", "none"):
            raise AnalysisError(f"ess_hold must be site, plan or none (got {self.ess_hold!r})")
        if not self.step > 0:
            raise AnalysisError("stress step must be positive")
        if self.max_factor < 1.0:
            raise AnalysisError("max_factor must be at least 1.0")

    def factors(self) -> list[float]:
        n = int(np.floor((self.max_factor - 1.0) / self.step + 1e-9))
        return [round(1.0 + k * self.step, 10) for k in range(n + 1)]


@dataclass
class StressTable:
    rows: list  # dicts in (mode, factor) order
    frontier: dict  # mode -> last feasible factor (None if 1.0 already fails)
    first_infeasible: dict  # mode -> first infeasible factor (None if never)

    def congested_at(self, mode: str, factor: float) -> list[int] | None:
        for r in self.rows:
            if r["mode"] == mode and r["factor"] == factor:
                return r["congested"]
        return None


def stress_sweep(case: NetworkCase, scenarios: ScenarioSet, config: StressConfig | None = None,
                 options: BuildOptions | None = None, mip: MipOptions | None = None,
                 ess_sites: dict[int, float] | None = None, progress=None) -> StressTable:
    """Raise the load inside the window step by step until each configuration fails.

    Storage runs start from the unstressed plan (``ess_sites``, bus ->
    capacity, solved here when not given) and keep what ``config.ess_hold``
    says.  Because a larger factor only adds load, the sweep stops at the
    first infeasible factor of each mode.
    """
    config = config or StressConfig()
    options = options or BuildOptions()
    rows, frontier, first_bad = [], {}, {}
    for mode in config.modes:
        opts = replace(options, mode=mode)
        sites = None
        if mode == "ess" and config.ess_hold != "none":
            sites = ess_sites
            if sites is None:
                base = solve_plan(case, scenarios, opts, mip)
                sites = dict(base.sites()) if base.feasible else {}
            if config.ess_hold == "site":
                sites = {b: None for b in sites}
        frontier[mode] = None
        first_bad[mode] = None
        for f in config.factors():
            res = solve_plan(case, stress_load(scenarios, f, config.window), opts, mip, label=mode, sites=sites)
            row = {"mode": mode, "factor": f, "status": res.status,
                   "cost": res.objective if res.feasible else float("nan"),
                   "congested": congested_lines(res, config.threshold)}
            rows.append(row)
            if progress is not None:
                progress(row)
            if not res.feasible:
                first_bad[mode] = f
                break
            frontier[mode] = f
    return StressTable(rows, frontier, first_bad)


def bisect_frontier(feasible, lo: float, hi: float, step: float) -> float | None:
    """Largest factor on the grid ``lo + k * step`` (up to ``hi``) accepted by ``feasible``.

    Assumes monotonicity (once infeasible, always infeasible).  Returns
    ``None`` when ``lo`` itself fails.
    """
    n = int(np.floor((hi - lo) / step + 1e-9))
    grid = [round(lo + k * step, 10) for k in range(n + 1)]
    if not feasible(grid[0]):
        return None
    a, b = 0, len(grid) - 1
    if feasible(grid[b]):
        return grid[b]
    while b - a > 1:
        m = (a + b) // 2
        if feasible(grid[m]):
            a = m
        else:
            b = m
    return grid[a]


# ---------------------------------------------------------------------------
# writers; numbers use a fixed format so that reruns are byte-identical


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if not np.isfinite(v):
        return "nan" if np.isnan(v) else ("inf" if v > 0 else "-inf")
    out = format(v, ".10g")
    return "0" if out == "-0" else out


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for r in rows:
            wr.writerow([fmt(v) if not isinstance(v, str) else v for v in r])


def _clean(obj):
    """JSON-ready copy with floats in the report format."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return float(fmt(v)) if np.isfinite(v) else None
    return obj


def write_json(path: Path, doc: dict) -> None:
    Path(path).write_text(json.dumps(_clean(doc), indent=2, sort_keys=True) + "\n")


def summary(res: PlanResult) -> dict:
    """Machine-readable run summary (no timings, so that reruns compare equal)."""
    opts = res.model.options
    doc = {
        "case": res.model.case.name,
        "mode": res.mode,
        "status": res.status,
        "options": {"max_sites": opts.max_sites, "lifetime_years": opts.lifetime_years},
        "amortization": {"rule": AMORTIZATION_RULE, "factor": amortization_factor(opts.lifetime_years)},
        "scenarios": [s.id for s in res.model.scenarios.scenarios],
        "hours": res.model.vs.hours,
        "binaries": res.model.n_binaries,
        "nodes": res.nodes,
        "flags": res.flags,
        "reductions": res.reductions,
    }
    if res.feasible:
        kwh = 1000.0 * res.model.case.s_base
        sites = res.sites()
        bus, v, sid, hour = weakest_bus(res)
        doc.update({
            "objective": res.objective,
            "bound": res.bound,
            "gap": res.gap,
            "costs": res.breakdown(),
            "sites": [{"bus": b, "capacity_pu": e, "capacity_kwh": e * kwh} for b, e in sites],
            "sited_bus": sites[0][0] if sites else None,
            "capacity_kwh": sum(e for _, e in sites) * kwh,
            "weakest_bus": {"bus": bus, "v": v, "scenario": sid, "hour": hour},
            "congested_lines": congested_lines(res),
            "exactness": exactness_summary(res),
        })
    return doc


def write_reports(res: PlanResult, out: Path, hours=None) -> list[Path]:
    """Write ``summary.json``, ``costs.csv`` and the per-scenario tables into ``out``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    write_json(out / "summary.json", summary(res))
    written.append(out / "summary.json")
    written.append(write_costs(out / "costs.csv", cost_comparison([(res.label, res)])))
    if not res.feasible:
        return written
    hours = range(1, res.model.vs.hours + 1) if hours is None else hours
    for w, scen in enumerate(res.model.scenarios.scenarios):
        if res.sites():
            a = arbitrage_profile(res, w)
            p = out / f"arbitrage_{scen.id}.csv"
            _write_csv(p, ["hour", "charge", "discharge", "soe_start"],
                       zip(a["hour"], a["charge"], a["discharge"], a["soe"][:-1]))
            written.append(p)
        for t in hours:
            v = voltage_report(res, w, t)
            p = out / f"voltage_{scen.id}_{t}.csv"
            _write_csv(p, ["bus", "v"], zip(v["bus"], v["v"]))
            written.append(p)
            c = congestion_report(res, w, t)
            p = out / f"loading_{scen.id}_{t}.csv"
            _write_csv(p, ["branch", "from", "to", "s", "s_max", "loading", "congested"],
                       ([r["branch"], r["from"], r["to"], r["s"], r["s_max"], r["loading"], r["congested"]] for r in c))
            written.append(p)
    return written


def write_costs(path: Path, rows: list[dict], include_runtime: bool = False) -> Path:
    """Cost comparison table; runtimes are left out unless asked for."""
    cols = ["case", "status", "count", "location", "capacity_kwh", "total_cost", "generation_cost",
            "investment_cost", "operation_cost", "gap"] + (["runtime"] if include_runtime else [])
    _write_csv(Path(path), cols, ([r[c] for c in cols] for r in rows))
    return Path(path)


def write_frontier(path: Path, table: StressTable) -> Path:
    _write_csv(Path(path), ["mode", "factor", "status", "cost", "congested"],
               ([r["mode"], r["factor"], r["status"], r["cost"], " ".join(map(str, r["congested"]))] for r in table.rows))
    return Path(path)
