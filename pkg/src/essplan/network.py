"""Radial distribution network case: data model, loading and topology checks."""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any


class CaseError(ValueError):
    """Raised when a case document cannot be parsed or fails validation."""


class TopologyError(CaseError):
    """Raised when the branch graph is not a radial tree rooted at the slack."""

    def __init__(self, message: str, buses=()):
        self.buses = tuple(buses)
        if self.buses:
            message = f"{message} (buses: {', '.join(map(str, self.buses))})"
        super().__init__(message)


@dataclass(frozen=True)
class Bus:
    id: int
    load_p_base: float = 0.0
    load_q_base: float = 0.0
    v_min_sq: float = 0.9025
    v_max_sq: float = 1.1025
    is_slack: bool = False


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    r: float
    x: float
    s_max: float


@dataclass(frozen=True)
class Generator:
    bus: int
    a: float
    b: float
    c: float
    p_min: float
    p_max: float
    q_min: float
    q_max: float


@dataclass(frozen=True)
class PvUnit:
    bus: int
    profile_key: str = "pv"
    scale: float = 1.0


@dataclass(frozen=True)
class Rpc:
    bus: int
    q_min: float
    q_max: float


@dataclass(frozen=True)
class EssCandidate:
    bus: int
    e_max: float
    p_ch_max: float
    p_dis_max: float
    q_inv_min: float
    q_inv_max: float
    eta_ch: float
    eta_dis: float
    f_cost: float = 250.0
    h_cost: float = 0.005


@dataclass(frozen=True)
class NetworkCase:
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    generators: tuple[Generator, ...] = ()
    pv_units: tuple[PvUnit, ...] = ()
    rpcs: tuple[Rpc, ...] = ()
    ess_candidates: tuple[EssCandidate, ...] = ()
    s_base: float = 1.0
    v_base: float = 12.66
    name: str = "case"
    notes: tuple[str, ...] = field(default=(), compare=False)

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def slack(self) -> int:
        return next(b.id for b in self.buses if b.is_slack)

    def bus(self, i: int) -> Bus:
        return self.buses[i - 1]

    def with_ess(self, candidates) -> "NetworkCase":
        return replace(self, ess_candidates=tuple(candidates))


@dataclass(frozen=True)
class Topology:
    """Parent-pointer tree rooted at the slack bus.

    ``branch_of[j]`` is the index of the branch feeding bus ``j`` and
    ``order`` lists buses breadth-first from the root.
    """

    root: int
    parent: dict[int, int]
    depth: dict[int, int]
    children: dict[int, tuple[int, ...]]
    branch_of: dict[int, int]
    order: tuple[int, ...]


def validate_radial(case: NetworkCase) -> Topology:
    """Check that the branches form a connected tree rooted at the slack bus."""
    ids = [b.id for b in case.buses]
    root = case.slack
    adj: dict[int, list[tuple[int, int]]] = {i: [] for i in ids}
    for k, br in enumerate(case.branches):
        for end in (br.from_bus, br.to_bus):
            if end not in adj:
                raise TopologyError(f"branch {k + 1} references unknown bus", [end])
        if br.from_bus == br.to_bus:
            raise TopologyError(f"branch {k + 1} is a self-loop", [br.from_bus])
        adj[br.from_bus].append((br.to_bus, k))
        adj[br.to_bus].append((br.from_bus, k))

    parent: dict[int, int] = {}
    depth = {root: 0}
    branch_of: dict[int, int] = {}
    children: dict[int, list[int]] = {i: [] for i in ids}
    order = [root]
    queue = deque([root])
    while queue:
        i = queue.popleft()
        for j, k in sorted(adj[i]):
            if branch_of.get(i) == k:
                continue
            if j in depth:
                raise TopologyError("not a tree: branch set contains a cycle", sorted({i, j}))
            parent[j] = i
            depth[j] = depth[i] + 1
            branch_of[j] = k
            children[i].append(j)
            order.append(j)
            queue.append(j)

    missing = sorted(set(ids) - set(depth))
    if missing:
        raise TopologyError("disconnected component: buses unreachable from the slack", missing)
    if len(case.branches) != len(ids) - 1:
        # parallel branches between the same pair end up here
        raise TopologyError("not a tree: |L| != |N| - 1")
    return Topology(
        root=root,
        parent=parent,
        depth=depth,
        children={i: tuple(c) for i, c in children.items()},
        branch_of=branch_of,
        order=tuple(order),
    )


def downstream_sets(case: NetworkCase, topo: Topology | None = None) -> dict[int, frozenset[int]]:
    """Map every bus j to the set {k : (j, k) in L} under the root orientation."""
    topo = topo or validate_radial(case)
    return {j: frozenset(topo.children[j]) for j in topo.order}


# ---------------------------------------------------------------------------
# parsing

def _num(obj: dict, key: str, where: str, default: Any = None) -> float:
    if key not in obj:
        if default is None:
            raise CaseError(f"{where}: missing field '{key}'")
        return float(default)
    val = obj[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise CaseError(f"{where}.{key}: expected a number, got {val!r}")
    if not math.isfinite(val):
        raise CaseError(f"{where}.{key}: value must be finite")
    return float(val)


def _check(cond: bool, msg: str) -> None:
    if not cond:
        raise CaseError(msg)


def _expand_ess(entries, bus_ids, slack, where="ess_candidates"):
    out = []
    for n, e in enumerate(entries):
        w = f"{where}[{n}]"
        if not isinstance(e, dict):
            raise CaseError(f"{w}: expected an object")
        bus = e.get("bus", "all")
        if bus == "all":
            buses = [i for i in bus_ids if i != slack]
        elif isinstance(bus, list):
            buses = [int(b) for b in bus]
        elif isinstance(bus, int) and not isinstance(bus, bool):
            buses = [bus]
        else:
            raise CaseError(f"{w}.bus: expected an integer, a list or 'all'")
        params = dict(
            e_max=_num(e, "e_max", w),
            p_ch_max=_num(e, "p_ch_max", w),
            p_dis_max=_num(e, "p_dis_max", w),
            q_inv_min=_num(e, "q_inv_min", w, 0.0),
            q_inv_max=_num(e, "q_inv_max", w, 0.0),
            eta_ch=_num(e, "eta_ch", w),
            eta_dis=_num(e, "eta_dis", w),
            f_cost=_num(e, "f_cost", w, 250.0),
            h_cost=_num(e, "h_cost", w, 0.005),
        )
        out.extend(EssCandidate(bus=b, **params) for b in buses)
    return out


def case_from_dict(doc: dict, name: str = "case") -> NetworkCase:
    """Build and validate a case from its JSON document."""
    if not isinstance(doc, dict):
        raise CaseError("case document must be a JSON object")
    for key in ("base", "buses", "branches"):
        if key not in doc:
            raise CaseError(f"missing top-level key '{key}'")
    base = doc["base"]
    s_base = _num(base, "s_base", "base")
    v_base = _num(base, "v_base", "base", 12.66)
    _check(s_base > 0 and v_base > 0, "base: s_base and v_base must be positive")

    buses = []
    for n, b in enumerate(doc["buses"]):
        w = f"buses[{n}]"
        if "id" not in b:
            raise CaseError(f"{w}: missing field 'id'")
        v_min = _num(b, "v_min", w, 0.95)
        v_max = _num(b, "v_max", w, 1.05)
        buses.append(
            Bus(
                id=int(b["id"]),
                load_p_base=_num(b, "p_load", w, 0.0),
                load_q_base=_num(b, "q_load", w, 0.0),
                v_min_sq=v_min**2,
                v_max_sq=v_max**2,
                is_slack=bool(b.get("slack", False)),
            )
        )
    branches = []
    for n, br in enumerate(doc["branches"]):
        w = f"branches[{n}]"
        for key in ("from", "to"):
            if key not in br:
                raise CaseError(f"{w}: missing field '{key}'")
        branches.append(
            Branch(int(br["from"]), int(br["to"]), _num(br, "r", w), _num(br, "x", w), _num(br, "s_max", w))
        )
    gens = []
    for n, g in enumerate(doc.get("generators", [])):
        w = f"generators[{n}]"
        gens.append(
            Generator(
                bus=int(g["bus"]),
                a=_num(g, "a", w, 0.0),
                b=_num(g, "b", w, 0.0),
                c=_num(g, "c", w, 0.0),
                p_min=_num(g, "p_min", w),
                p_max=_num(g, "p_max", w),
                q_min=_num(g, "q_min", w),
                q_max=_num(g, "q_max", w),
            )
        )
    pvs = [
        PvUnit(bus=int(p["bus"]), profile_key=str(p.get("profile", "pv")), scale=_num(p, "scale", f"pv_units[{n}]", 1.0))
        for n, p in enumerate(doc.get("pv_units", []))
    ]
    rpcs = [
        Rpc(bus=int(r["bus"]), q_min=_num(r, "q_min", f"rpcs[{n}]"), q_max=_num(r, "q_max", f"rpcs[{n}]"))
        for n, r in enumerate(doc.get("rpcs", []))
    ]
    ids = [b.id for b in buses]
    slack = next((b.id for b in buses if b.is_slack), None)
    ess = _expand_ess(doc.get("ess_candidates", []), ids, slack)
    case = NetworkCase(
        buses=tuple(sorted(buses, key=lambda b: b.id)),
        branches=tuple(branches),
        generators=tuple(gens),
        pv_units=tuple(pvs),
        rpcs=tuple(rpcs),
        ess_candidates=tuple(ess),
        s_base=s_base,
        v_base=v_base,
        name=str(doc.get("name", name)),
        notes=tuple(doc.get("notes", ())),
    )
    validate_case(case)
    return case


def load_case(path) -> NetworkCase:
    """Read a JSON case file and return the validated :class:`NetworkCase`."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise CaseError(f"{path}: {exc.strerror}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CaseError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    try:
        return case_from_dict(doc, name=path.stem)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, CaseError):
            raise CaseError(f"{path}: {exc}") from exc
        raise CaseError(f"{path}: malformed entry ({exc})") from exc


def validate_case(case: NetworkCase) -> Topology:
    ids = [b.id for b in case.buses]
    _check(len(ids) > 0, "case has no buses")
    _check(ids == list(range(1, len(ids) + 1)), "bus ids must be dense and start at 1")
    slacks = [b.id for b in case.buses if b.is_slack]
    _check(len(slacks) == 1, f"exactly one slack bus required, found {len(slacks)}")
    _check(slacks[0] == 1, "bus 1 must be the slack bus")
    for b in case.buses:
        _check(0 < b.v_min_sq < b.v_max_sq, f"bus {b.id}: need 0 < v_min < v_max")
    for k, br in enumerate(case.branches):
        _check(br.r >= 0 and br.x >= 0, f"branch {k + 1}: r and x must be nonnegative")
        _check(br.r > 0 or br.x > 0, f"branch {k + 1}: r and x cannot both be zero")
        _check(br.s_max > 0, f"branch {k + 1}: s_max must be positive")
    n = len(ids)

    def on_bus(i, what):
        _check(1 <= i <= n, f"{what} references unknown bus {i}")

    for g in case.generators:
        on_bus(g.bus, "generator")
        _check(g.p_min <= g.p_max, f"generator at bus {g.bus}: p_min > p_max")
        _check(g.q_min <= g.q_max, f"generator at bus {g.bus}: q_min > q_max")
        _check(g.c >= 0, f"generator at bus {g.bus}: negative quadratic cost makes the objective non-convex")
    for p in case.pv_units:
        on_bus(p.bus, "PV unit")
        _check(p.scale >= 0, f"PV unit at bus {p.bus}: scale must be nonnegative")
    for r in case.rpcs:
        on_bus(r.bus, "RPC")
        _check(r.q_min <= 0 <= r.q_max, f"RPC at bus {r.bus}: need q_min <= 0 <= q_max")
    seen = set()
    for e in case.ess_candidates:
        on_bus(e.bus, "ESS candidate")
        _check(e.bus not in seen, f"duplicate ESS candidate at bus {e.bus}")
        seen.add(e.bus)
        _check(e.e_max > 0 and e.p_ch_max > 0 and e.p_dis_max > 0, f"ESS at bus {e.bus}: limits must be positive")
        _check(0 < e.eta_ch <= 1 and 0 < e.eta_dis <= 1, f"ESS at bus {e.bus}: efficiencies must lie in (0, 1]")
        _check(e.q_inv_min >= 0 and e.q_inv_max >= 0, f"ESS at bus {e.bus}: inverter limits are magnitudes")
        _check(e.f_cost >= 0 and e.h_cost >= 0, f"ESS at bus {e.bus}: costs must be nonnegative")
    return validate_radial(case)


def case_to_dict(case: NetworkCase) -> dict:
    """Inverse of :func:`case_from_dict` (ESS candidates written one per bus)."""
    return {
        "name": case.name,
        "notes": list(case.notes),
        "base": {"s_base": case.s_base, "v_base": case.v_base},
        "buses": [
            {
                "id": b.id,
                "p_load": b.load_p_base,
                "q_load": b.load_q_base,
                "v_min": math.sqrt(b.v_min_sq),
                "v_max": math.sqrt(b.v_max_sq),
                "slack": b.is_slack,
            }
            for b in case.buses
        ],
        "branches": [
            {"from": br.from_bus, "to": br.to_bus, "r": br.r, "x": br.x, "s_max": br.s_max} for br in case.branches
        ],
        "generators": [g.__dict__.copy() for g in case.generators],
        "pv_units": [{"bus": p.bus, "profile": p.profile_key, "scale": p.scale} for p in case.pv_units],
        "rpcs": [r.__dict__.copy() for r in case.rpcs],
        "ess_candidates": [e.__dict__.copy() for e in case.ess_candidates],
    }


# ---------------------------------------------------------------------------
# unit conversion

def to_physical(case: NetworkCase) -> dict:
    """Express a per-unit case in MW, MVAr, MWh, ohm, kV and $/MWh."""
    sb, vb = case.s_base, case.v_base
    zb = vb**2 / sb
    return {
        "s_base": sb,
        "v_base": vb,
        "buses": [
            (b.id, b.load_p_base * sb, b.load_q_base * sb, math.sqrt(b.v_min_sq) * vb, math.sqrt(b.v_max_sq) * vb, b.is_slack)
            for b in case.buses
        ],
        "branches": [(br.from_bus, br.to_bus, br.r * zb, br.x * zb, br.s_max * sb) for br in case.branches],
        "generators": [
            (g.bus, g.a, g.b / sb, g.c / sb**2, g.p_min * sb, g.p_max * sb, g.q_min * sb, g.q_max * sb)
            for g in case.generators
        ],
        "pv_units": [(p.bus, p.profile_key, p.scale * sb) for p in case.pv_units],
        "rpcs": [(r.bus, r.q_min * sb, r.q_max * sb) for r in case.rpcs],
        "ess": [
            (e.bus, e.e_max * sb, e.p_ch_max * sb, e.p_dis_max * sb, e.q_inv_min * sb, e.q_inv_max * sb,
             e.eta_ch, e.eta_dis, e.f_cost, e.h_cost)
            for e in case.ess_candidates
        ],
    }


def from_physical(phys: dict, name: str = "case") -> NetworkCase:
    sb, vb = phys["s_base"], phys["v_base"]
    zb = vb**2 / sb
    return NetworkCase(
        buses=tuple(
            Bus(i, p / sb, q / sb, (vmin / vb) ** 2, (vmax / vb) ** 2, slack)
            for i, p, q, vmin, vmax, slack in phys["buses"]
        ),
        branches=tuple(Branch(i, j, r / zb, x / zb, s / sb) for i, j, r, x, s in phys["branches"]),
        generators=tuple(
            Generator(bus, a, b * sb, c * sb**2, pmin / sb, pmax / sb, qmin / sb, qmax / sb)
            for bus, a, b, c, pmin, pmax, qmin, qmax in phys["generators"]
        ),
        pv_units=tuple(PvUnit(bus, key, s / sb) for bus, key, s in phys["pv_units"]),
        rpcs=tuple(Rpc(bus, qmin / sb, qmax / sb) for bus, qmin, qmax in phys["rpcs"]),
        ess_candidates=tuple(
            EssCandidate(bus, e / sb, pc / sb, pd / sb, qn / sb, qx / sb, ec, ed, f, h)
            for bus, e, pc, pd, qn, qx, ec, ed, f, h in phys["ess"]
        ),
        s_base=sb,
        v_base=vb,
        name=name,
    )
