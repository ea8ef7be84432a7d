"""Command-line front end: ``essplan validate | solve | stress | report``.

Exit codes: 0 on success (an infeasible model is a result, not a failure),
2 for invalid input or configuration, 1 for internal errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

import numpy as np

from . import analysis
from .bnb import MipOptions
from .model import BuildOptions, ModelError, build
from .network import CaseError, case_from_dict, case_to_dict, load_case
from .scenario import ScenarioError, load_scenarios, scenarios_from_dict, scenarios_to_dict

log = logging.getLogger("essplan")

EXIT_OK, EXIT_INTERNAL, EXIT_INPUT = 0, 1, 2


class ConfigError(ValueError):
    pass


def bundled(name: str) -> Path:
    """Path of a bundled data file (``case33.json`` or ``scenarios.json``)."""
    return Path(str(resources.files("essplan") / "data" / name))


@dataclass
class RunConfig:
    case: str = ""
    scenarios: str = ""
    mode: str = "ess"
    max_sites: int = 1
    gap: float = 1e-4
    time_limit: float | None = None
    lifetime_years: float = 10.0
    stress_window: tuple = (17, 24)
    stress_step: float = 0.01
    max_factor: float = 1.5
    stress_modes: tuple = ("rpc", "ess")
    out: str = "results"
    extra: dict = field(default_factory=dict)

    def validate(self):
        if self.mode not in ("none", "rpc", "ess"):
            raise ConfigError(f"mode must be none, rpc or ess (got {self.mode!r})")
        if not self.gap > 0:
            raise ConfigError("gap must be positive")
        if self.time_limit is not None and not self.time_limit > 0:
            raise ConfigError("time limit must be positive")
        if not self.stress_step > 0:
            raise ConfigError("stress step must be positive")
        if self.max_factor < 1.0:
            raise ConfigError("max factor must be at least 1.0")
        for p in (self.case, self.scenarios):
            if not Path(p).is_file():
                raise ConfigError(f"no such file: {p}")
        return self


def _window(text) -> tuple[int, int]:
    if isinstance(text, (list, tuple)):
        lo, hi = text
    else:
        try:
            lo, hi = (int(v) for v in str(text).replace(",", "-").split("-"))
        except ValueError:
            raise ConfigError(f"stress window must look like 17-24 (got {text!r})") from None
    return int(lo), int(hi)


def make_config(args) -> RunConfig:
    """Defaults, then the optional config file, then explicit flags."""
    cfg = RunConfig(case=str(bundled("case33.json")), scenarios=str(bundled("scenarios.json")))
    names = {f.name for f in fields(RunConfig)} - {"extra"}
    if getattr(args, "config", None):
        try:
            doc = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"config file {args.config}: {exc}") from exc
        for k, v in doc.items():
            key = k.replace("-", "_")
            if key not in names:
                raise ConfigError(f"config file {args.config}: unknown key {k!r}")
            setattr(cfg, key, v)
    for k in names:
        v = getattr(args, k, None)
        if v is not None:
            setattr(cfg, k, v)
    cfg.stress_window = _window(cfg.stress_window)
    if isinstance(cfg.stress_modes, str):
        cfg.stress_modes = tuple(m for m in cfg.stress_modes.split(",") if m)
    return cfg.validate()


def _inputs(cfg: RunConfig):
    case = load_case(cfg.case)
    scen = load_scenarios(cfg.scenarios)
    return case, scen


def _options(cfg: RunConfig, mode=None) -> tuple[BuildOptions, MipOptions]:
    build_opts = BuildOptions(mode=mode or cfg.mode, max_sites=cfg.max_sites, lifetime_years=cfg.lifetime_years)
    return build_opts, MipOptions(gap_tol=cfg.gap, time_limit=cfg.time_limit, stream=sys.stderr)


def _runlog(out: Path, lines):
    # timings live here so that the report files stay byte-identical across runs
    with open(out / "run.log", "a") as fh:
        for line in lines:
            fh.write(line + "\n")


def save_solution(res: analysis.PlanResult, path: Path):
    """Everything ``report`` needs to rebuild the reports without solving."""
    m = res.model
    doc = {
        "case": case_to_dict(m.case),
        "scenarios": scenarios_to_dict(m.scenarios),
        "options": {"mode": m.options.mode, "max_sites": m.options.max_sites,
                    "lifetime_years": m.options.lifetime_years},
        "status": res.status,
        "objective": res.objective if res.feasible else None,
        "bound": res.bound if np.isfinite(res.bound) else None,
        "nodes": res.nodes,
        "flags": res.flags,
        "reductions": res.reductions,
        # repr round-trips floats exactly
        "x": None if res.x is None else [float(v) for v in res.x],
    }
    Path(path).write_text(json.dumps(doc, separators=(",", ":")) + "\n")


def load_solution(path: Path) -> analysis.PlanResult:
    doc = json.loads(Path(path).read_text())
    case = case_from_dict(doc["case"])
    scen = scenarios_from_dict(doc["scenarios"])
    model = build(case, scen, BuildOptions(**doc["options"]))
    x = None if doc["x"] is None else np.array(doc["x"], dtype=float)
    if x is not None and x.shape[0] != model.vs.n:
        raise ConfigError(f"{path}: solution length does not match the rebuilt model")
    obj = doc["objective"] if doc["objective"] is not None else float("nan")
    bound = doc["bound"] if doc["bound"] is not None else float("inf")
    gap = max(0.0, (obj - bound) / max(1.0, abs(obj))) if x is not None else float("nan")
    return analysis.PlanResult(model.options.mode, model, doc["status"], x, obj, bound, gap, doc["nodes"], 0.0,
                               doc["flags"], doc["reductions"])


# ---------------------------------------------------------------------------


def cmd_validate(args) -> int:
    cfg = make_config(args)
    case, scen = _inputs(cfg)
    print(f"case {case.name}: {case.n_bus} buses, {len(case.branches)} branches, "
          f"{len(case.ess_candidates)} storage candidates")
    print(f"scenarios: {len(scen.scenarios)} x {scen.hours_per_day} h")
    return EXIT_OK


def cmd_solve(args) -> int:
    cfg = make_config(args)
    case, scen = _inputs(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    build_opts, mip = _options(cfg)
    if args.dump_model:
        from .dump import write_model

        write_model(build(case, scen, build_opts), args.dump_model)
    res = analysis.solve_plan(case, scen, build_opts, mip, label=cfg.mode)
    analysis.write_reports(res, out)
    save_solution(res, out / "solution.json")
    _runlog(out, [f"solve mode={cfg.mode} status={res.status} nodes={res.nodes} runtime={res.runtime:.3f}s"])
    line = f"{cfg.mode}: {res.status}"
    if res.feasible:
        line += f", objective {res.objective:.6f}, gap {100 * res.gap:.4f}%"
        for b, e in res.sites():
            line += f", storage at bus {b} ({e * 1000 * case.s_base:.1f} kWh)"
    print(line)
    return EXIT_OK


def cmd_stress(args) -> int:
    cfg = make_config(args)
    case, scen = _inputs(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    build_opts, mip = _options(cfg)
    mip.stream = None
    conf = analysis.StressConfig(window=cfg.stress_window, step=cfg.stress_step, max_factor=cfg.max_factor,
                                 modes=tuple(cfg.stress_modes))

    def progress(row):
        print(f"{row['mode']} factor={row['factor']:.2f} {row['status']}", file=sys.stderr)

    t0 = time.perf_counter()
    table = analysis.stress_sweep(case, scen, conf, build_opts, mip, progress=progress)
    analysis.write_frontier(out / "stress_frontier.csv", table)
    _runlog(out, [f"stress modes={','.join(conf.modes)} runtime={time.perf_counter() - t0:.3f}s"])
    for mode in conf.modes:
        print(f"{mode}: last feasible factor {table.frontier[mode]}, first infeasible {table.first_infeasible[mode]}")
    return EXIT_OK


def cmd_report(args) -> int:
    src = Path(args.solution or Path(args.out or "results") / "solution.json")
    if not src.is_file():
        raise ConfigError(f"no such file: {src}")
    res = load_solution(src)
    out = Path(args.out) if args.out else src.parent
    written = analysis.write_reports(res, out)
    print(f"wrote {len(written)} files to {out}")
    return EXIT_OK


def parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="essplan", description="Storage sizing and siting on radial feeders.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, solve=True):
        p.add_argument("--config", help="JSON file with default settings; flags win")
        p.add_argument("--case", help="case file (default: bundled 33-bus case)")
        p.add_argument("--scenarios", help="scenario file (default: bundled 12 days)")
        if not solve:
            return
        p.add_argument("--mode", choices=("none", "rpc", "ess"))
        p.add_argument("--max-sites", dest="max_sites", type=int)
        p.add_argument("--gap", type=float, help="relative optimality gap (default 1e-4)")
        p.add_argument("--time-limit", dest="time_limit", type=float, help="seconds")
        p.add_argument("--lifetime-years", dest="lifetime_years", type=float)
        p.add_argument("--out", help="output directory (default: results)")

    p = sub.add_parser("validate", help="check a case and scenario file")
    common(p, solve=False)
    p.set_defaults(func=cmd_validate)
    p = sub.add_parser("solve", help="solve one configuration and write reports")
    common(p)
    p.add_argument("--dump-model", dest="dump_model", help="also write the model in the interchange format")
    p.set_defaults(func=cmd_solve)
    p = sub.add_parser("stress", help="load stress sweep per configuration")
    common(p)
    p.add_argument("--stress-window", dest="stress_window", help="hours, e.g. 17-24")
    p.add_argument("--stress-step", dest="stress_step", type=float)
    p.add_argument("--max-factor", dest="max_factor", type=float)
    p.add_argument("--modes", dest="stress_modes", help="comma-separated, default rpc,ess")
    p.set_defaults(func=cmd_stress)
    p = sub.add_parser("report", help="rewrite reports from a saved solution")
    p.add_argument("--solution", help="solution.json (default: <out>/solution.json)")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (CaseError, ScenarioError, ModelError, ConfigError, analysis.AnalysisError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
