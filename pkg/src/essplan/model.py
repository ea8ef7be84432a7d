"""Assembly of the storage planning MIQCP.

Every (scenario, hour) pair gets one block of columns laid out in the fixed
kind order of :data:`BLOCK_KINDS`; investment columns (capacity ``E`` and
siting binaries ``y``) follow the last block.  Rows and cones are emitted in
canonical ``(scenario, hour, kind, index)`` order so that two builds from the
same inputs are identical.

Sign conventions follow the branch flow model: ``P[k]``, ``Q[k]`` is the
flow entering branch ``k`` at its upstream end, ``pnet[i]``, ``qnet[i]`` the
net withdrawal at bus ``i`` and ``L[k]`` the squared current.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .conic.problem import ConicProblem
from .network import NetworkCase, Topology, validate_case
from .scenario import ScenarioSet, normalize_weights

MODES = ("none", "rpc", "ess")

BLOCK_KINDS = ("pG", "qG", "P", "Q", "L", "W", "pnet", "qnet", "qR", "pch", "pdis", "qinv", "e", "xch", "xdis")
GLOBAL_KINDS = ("E", "y")
BINARY_KINDS = ("xch", "xdis", "y")


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class BuildOptions:
    mode: str = "ess"
    max_sites: int = 1
    lifetime_years: float = 10.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ModelError(f"unknown mode {self.mode!r}; expected one of {', '.join(MODES)}")
        if self.max_sites < 1:
            raise ModelError("max_sites must be at least 1")
        if not self.lifetime_years > 0:
            raise ModelError("lifetime_years must be positive")


def amortization_factor(lifetime_years: float) -> float:
    """Hourly share of a one-off investment: ``1 / (365 * lifetime * 24)``."""
    return 1.0 / (365.0 * lifetime_years * 24.0)


class VariableSpace:
    """Bijective map between ``(kind, element, t, omega)`` and column ids.

    ``element`` is a generator position for ``pG``/``qG``, a 1-based branch
    number for ``P``/``Q``/``L``, a bus id for ``W``/``pnet``/``qnet`` and for
    storage kinds, and an RPC position for ``qR``.
    """

    def __init__(self, elements: dict[str, tuple], n_scen: int, hours: int):
        self.n_scen = n_scen
        self.hours = hours
        self.elements = {k: tuple(elements.get(k, ())) for k in BLOCK_KINDS + GLOBAL_KINDS}
        self.offset = {}
        off = 0
        for k in BLOCK_KINDS:
            self.offset[k] = off
            off += len(self.elements[k])
        self.block_size = off
        self.n_block_cols = off * n_scen * hours
        goff = self.n_block_cols
        for k in GLOBAL_KINDS:
            self.offset[k] = goff
            goff += len(self.elements[k])
        self.n = goff
        self._pos = {k: {e: i for i, e in enumerate(v)} for k, v in self.elements.items()}

    def count(self, kind: str) -> int:
        return len(self.elements[kind])

    def block_start(self, t: int, omega: int) -> int:
        return (omega * self.hours + t) * self.block_size

    def col(self, kind: str, element, t: int | None = None, omega: int | None = None) -> int:
        pos = self._pos[kind][element]
        if kind in GLOBAL_KINDS:
            return self.offset[kind] + pos
        return self.block_start(t, omega) + self.offset[kind] + pos

    def cols(self, kind: str) -> np.ndarray:
        """Column ids of ``kind``: shape (n_scen, hours, count) or (count,) for investment kinds."""
        m = self.count(kind)
        if kind in GLOBAL_KINDS:
            return self.offset[kind] + np.arange(m)
        base = np.arange(self.n_scen * self.hours).reshape(self.n_scen, self.hours) * self.block_size
        return base[:, :, None] + self.offset[kind] + np.arange(m)[None, None, :]

    def label(self, j: int) -> tuple:
        if j >= self.n_block_cols:
            for k in reversed(GLOBAL_KINDS):
                if j >= self.offset[k]:
                    return (k, self.elements[k][j - self.offset[k]], None, None)
        blk, r = divmod(j, self.block_size)
        omega, t = divmod(blk, self.hours)
        for k in reversed(BLOCK_KINDS):
            if r >= self.offset[k] and self.count(k):
                return (k, self.elements[k][r - self.offset[k]], t, omega)
        raise IndexError(j)


class _Rows:
    """Row and cone accumulator in emission order."""

    def __init__(self):
        self.eq = ([], [], [], [], [])  # rows, cols, vals, rhs, labels
        self.ineq = ([], [], [], [], [])
        self.n_eq = 0
        self.n_in = 0
        self.cone_rows, self.cone_cols, self.cone_vals = [], [], []
        self.h: list[float] = []
        self.dims: list[int] = []
        self.cone_labels: list[tuple] = []
        self.rotated: list[tuple] = []

    def add(self, sense, label, cols, vals, rhs):
        store = self.eq if sense == "=" else self.ineq
        r = self.n_eq if sense == "=" else self.n_in
        store[0].extend([r] * len(cols))
        store[1].extend(cols)
        store[2].extend(vals)
        store[3].append(rhs)
        store[4].append(label)
        if sense == "=":
            self.n_eq += 1
        else:
            self.n_in += 1

    def cone(self, label, entries, h, rotated=None):
        """``h - G x in Q``; ``entries[r]`` lists ``(col, G value)`` for cone row r."""
        base = len(self.h)
        for r, row in enumerate(entries):
            for c, v in row:
                self.cone_rows.append(base + r)
                self.cone_cols.append(c)
                self.cone_vals.append(v)
        self.h.extend(h)
        self.dims.append(len(h))
        self.cone_labels.append(label)
        if rotated is not None:
            self.rotated.append(rotated)


@dataclass
class PlanningModel:
    case: NetworkCase
    scenarios: ScenarioSet
    options: BuildOptions
    topology: Topology
    vs: VariableSpace
    problem: ConicProblem
    binaries: np.ndarray
    eq_labels: list
    in_labels: list
    cone_labels: list
    cost_parts: dict = field(default_factory=dict)

    @property
    def n_binaries(self) -> int:
        return int(self.binaries.shape[0])

    def objective_breakdown(self, x: np.ndarray) -> dict:
        """Generation, amortized investment and operation cost at ``x``."""
        gen = float(0.5 * np.dot(self.cost_parts["P"] * x, x) + self.cost_parts["c_gen"] @ x + self.problem.c0)
        inv = float(self.cost_parts["c_inv"] @ x)
        op = float(self.cost_parts["c_op"] @ x)
        return {"generation": gen, "investment": inv, "operation": op, "total": gen + inv + op}

    def relaxed(self) -> ConicProblem:
        """Continuous relaxation with binaries in [0, 1] (a copy)."""
        return self.problem.copy()

    def counts(self) -> dict:
        """Rows and cones per kind, for the structural count invariants."""
        out: dict = {}
        for labels, what in ((self.eq_labels, "eq"), (self.in_labels, "in"), (self.cone_labels, "cone")):
            for lab in labels:
                key = (what, lab[2])
                out[key] = out.get(key, 0) + 1
        return out


def _elements(case: NetworkCase, topo: Topology, options: BuildOptions) -> dict:
    non_slack = tuple(b.id for b in case.buses if not b.is_slack)
    el = {
        "pG": tuple(range(len(case.generators))),
        "qG": tuple(range(len(case.generators))),
        "P": tuple(range(1, len(case.branches) + 1)),
        "Q": tuple(range(1, len(case.branches) + 1)),
        "L": tuple(range(1, len(case.branches) + 1)),
        "W": tuple(b.id for b in case.buses),
        "pnet": non_slack,
        "qnet": non_slack,
    }
    if options.mode == "rpc":
        el["qR"] = tuple(range(len(case.rpcs)))
    if options.mode == "ess":
        buses = tuple(e.bus for e in case.ess_candidates)
        for k in ("pch", "pdis", "qinv", "e", "xch", "xdis", "E", "y"):
            el[k] = buses
    return el


def _branch_ends(case: NetworkCase, topo: Topology) -> list[tuple[int, int]]:
    """(upstream bus, downstream bus) of every branch under the root orientation."""
    ends = [None] * len(case.branches)
    for j, k in topo.branch_of.items():
        ends[k] = (topo.parent[j], j)
    return ends


def build_distflow_rows(rows: _Rows, vs: VariableSpace, case: NetworkCase, topo: Topology, omega: int, t: int):
    """Branch flow equations and relaxed current cones for one (scenario, hour)."""
    ends = _branch_ends(case, topo)
    col = vs.col
    for k, (i, j) in enumerate(ends):
        br = case.branches[k]
        b = k + 1
        kids = [topo.branch_of[c] + 1 for c in topo.children[j]]
        # P_ij = p_j + r l_ij + sum_k P_jk
        cols = [col("P", b, t, omega), col("pnet", j, t, omega), col("L", b, t, omega)]
        vals = [1.0, -1.0, -br.r]
        cols += [col("P", c, t, omega) for c in kids]
        vals += [-1.0] * len(kids)
        rows.add("=", (omega, t, "p_flow", b), cols, vals, 0.0)
    for k, (i, j) in enumerate(ends):
        br = case.branches[k]
        b = k + 1
        kids = [topo.branch_of[c] + 1 for c in topo.children[j]]
        cols = [col("Q", b, t, omega), col("qnet", j, t, omega), col("L", b, t, omega)]
        vals = [1.0, -1.0, -br.x]
        cols += [col("Q", c, t, omega) for c in kids]
        vals += [-1.0] * len(kids)
        rows.add("=", (omega, t, "q_flow", b), cols, vals, 0.0)
    for k, (i, j) in enumerate(ends):
        br = case.branches[k]
        b = k + 1
        # w_j = w_i + (r^2 + x^2) l - 2 (r P + x Q)
        cols = [col("W", j, t, omega), col("W", i, t, omega), col("L", b, t, omega), col("P", b, t, omega), col("Q", b, t, omega)]
        vals = [1.0, -1.0, -(br.r**2 + br.x**2), 2.0 * br.r, 2.0 * br.x]
        rows.add("=", (omega, t, "voltage", b), cols, vals, 0.0)
    for k, (i, j) in enumerate(ends):
        b = k + 1
        cp, cq, cl, cw = col("P", b, t, omega), col("Q", b, t, omega), col("L", b, t, omega), col("W", i, t, omega)
        # (l + w, l - w, 2p, 2q) in Q^4  <=>  p^2 + q^2 <= l w
        rows.cone(
            (omega, t, "current", b),
            [[(cl, -1.0), (cw, -1.0)], [(cl, -1.0), (cw, 1.0)], [(cp, -2.0)], [(cq, -2.0)]],
            [0.0, 0.0, 0.0, 0.0],
            rotated=(cp, cq, cl, cw),
        )
    for k in range(len(ends)):
        b = k + 1
        rows.cone(
            (omega, t, "thermal", b),
            [[], [(col("P", b, t, omega), -1.0)], [(col("Q", b, t, omega), -1.0)]],
            [case.branches[k].s_max, 0.0, 0.0],
        )


def bus_demand(case: NetworkCase, scen, t: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Active load, reactive load and PV output per bus (index bus id - 1)."""
    s = scen.load_scale[t]
    pd = np.array([b.load_p_base * s for b in case.buses])
    qd = np.array([b.load_q_base * s for b in case.buses])
    pv = np.zeros(case.n_bus)
    for u in case.pv_units:
        pv[u.bus - 1] += u.scale * scen.pv(u.profile_key, t)
    return pd, qd, pv


def build_nodal_rows(rows: _Rows, vs: VariableSpace, case: NetworkCase, topo: Topology, scen, omega: int, t: int,
                     options: BuildOptions):
    """Net withdrawal definitions ``p_i = p_D - p_G - p_PV - p_dis + p_ch`` and the reactive analogue.

    At the slack bus the withdrawal is expressed through its outgoing flows,
    ``p_1 = -sum_k P_1k``, which closes the power balance at the root.
    """
    pd, qd, pv = bus_demand(case, scen, t)
    col = vs.col
    gens_at: dict[int, list[int]] = {}
    for g, gen in enumerate(case.generators):
        gens_at.setdefault(gen.bus, []).append(g)
    rpc_at: dict[int, list[int]] = {}
    if options.mode == "rpc":
        for r, dev in enumerate(case.rpcs):
            rpc_at.setdefault(dev.bus, []).append(r)
    ess_at = set(vs.elements["pch"])
    root = topo.root
    root_out = [topo.branch_of[c] + 1 for c in topo.children[root]]

    for active in (True, False):
        kind = "p_balance" if active else "q_balance"
        for bus in case.buses:
            i = bus.id
            if i == root:
                cols = [col("P" if active else "Q", b, t, omega) for b in root_out]
                vals = [-1.0] * len(cols)
            else:
                cols = [col("pnet" if active else "qnet", i, t, omega)]
                vals = [1.0]
            for g in gens_at.get(i, ()):
                cols.append(col("pG" if active else "qG", g, t, omega))
                vals.append(1.0)
            if active:
                if i in ess_at:
                    cols += [col("pdis", i, t, omega), col("pch", i, t, omega)]
                    vals += [1.0, -1.0]
                rhs = pd[i - 1] - pv[i - 1]
            else:
                for r in rpc_at.get(i, ()):
                    cols.append(col("qR", r, t, omega))
                    vals.append(1.0)
                if i in ess_at:
                    cols.append(col("qinv", i, t, omega))
                    vals.append(-1.0)
                rhs = qd[i - 1]
            rows.add("=", (omega, t, kind, i), cols, vals, float(rhs))


def build_ess_rows(rows: _Rows, vs: VariableSpace, case: NetworkCase, omega: int, t: int):
    """Storage limits, complementarity and state-of-energy recursion for one (scenario, hour).

    The recursion row at the last hour links back to the first one, which is
    the cyclic condition ``e(1) = e(T + 1)``.
    """
    col = vs.col
    T = vs.hours
    for c in case.ess_candidates:
        i = c.bus
        rows.add("<", (omega, t, "complementarity", i), [col("xch", i, t, omega), col("xdis", i, t, omega)], [1.0, 1.0], 1.0)
    for c in case.ess_candidates:
        i = c.bus
        rows.add("<", (omega, t, "charge_limit", i), [col("pch", i, t, omega), col("xch", i, t, omega)], [1.0, -c.p_ch_max], 0.0)
    for c in case.ess_candidates:
        i = c.bus
        rows.add("<", (omega, t, "discharge_limit", i), [col("pdis", i, t, omega), col("xdis", i, t, omega)], [1.0, -c.p_dis_max], 0.0)
    for c in case.ess_candidates:
        i = c.bus
        rows.add("<", (omega, t, "inverter_max", i), [col("qinv", i, t, omega), col("y", i)], [1.0, -c.q_inv_max], 0.0)
    for c in case.ess_candidates:
        i = c.bus
        rows.add("<", (omega, t, "inverter_min", i), [col("qinv", i, t, omega), col("y", i)], [-1.0, -c.q_inv_min], 0.0)
    for c in case.ess_candidates:
        i = c.bus
        rows.add("<", (omega, t, "soe_capacity", i), [col("e", i, t, omega), col("E", i)], [1.0, -1.0], 0.0)
    for c in case.ess_candidates:
        i = c.bus
        nxt = (t + 1) % T
        # e(t+1) - e(t) - eta_ch p_ch(t) + p_dis(t) / eta_dis = 0
        cols = [col("e", i, nxt, omega), col("e", i, t, omega), col("pch", i, t, omega), col("pdis", i, t, omega)]
        vals = [1.0, -1.0, -c.eta_ch, 1.0 / c.eta_dis]
        if nxt == t:  # single-hour horizon: e cancels
            cols, vals = cols[2:], vals[2:]
        rows.add("=", (omega, t, "soe", i), cols, vals, 0.0)


def build_objective(vs: VariableSpace, case: NetworkCase, scenarios: ScenarioSet, options: BuildOptions) -> dict:
    """Quadratic generation cost, amortized investment and throughput cost.

    Storage prices are given in $/kWh; per-unit energy is converted with
    ``1000 * s_base`` kWh per unit.
    """
    n = vs.n
    P = np.zeros(n)
    c_gen = np.zeros(n)
    c_inv = np.zeros(n)
    c_op = np.zeros(n)
    c0 = 0.0
    rho = scenarios.weights
    T = vs.hours
    if case.generators:
        pg = vs.cols("pG")  # (S, T, G)
        a = np.array([g.a for g in case.generators])
        b = np.array([g.b for g in case.generators])
        c = np.array([g.c for g in case.generators])
        w = np.broadcast_to(rho[:, None, None], pg.shape)
        c_gen[pg] = w * b
        P[pg] = 2.0 * w * c
        c0 = float(np.sum(rho) * T * np.sum(a))
    if options.mode == "ess":
        kwh = 1000.0 * case.s_base
        amort = amortization_factor(options.lifetime_years)
        f = np.array([e.f_cost for e in case.ess_candidates])
        h = np.array([e.h_cost for e in case.ess_candidates])
        c_inv[vs.cols("E")] = amort * f * kwh
        for kind in ("pch", "pdis"):
            cc = vs.cols(kind)
            c_op[cc] = rho[:, None, None] * h[None, None, :] * kwh
    return {"P": P, "c_gen": c_gen, "c_inv": c_inv, "c_op": c_op, "c0": c0}


def _bounds(vs: VariableSpace, case: NetworkCase, options: BuildOptions) -> tuple[np.ndarray, np.ndarray]:
    n = vs.n
    lb = np.full(n, -np.inf)
    ub = np.full(n, np.inf)

    def put(kind, lo, hi):
        cc = vs.cols(kind)
        if cc.size == 0:
            return
        lb[cc] = np.broadcast_to(lo, cc.shape)
        ub[cc] = np.broadcast_to(hi, cc.shape)

    g = case.generators
    put("pG", np.array([x.p_min for x in g]), np.array([x.p_max for x in g]))
    put("qG", np.array([x.q_min for x in g]), np.array([x.q_max for x in g]))
    put("L", 0.0, np.inf)
    vmin = np.array([b.v_min_sq for b in case.buses])
    vmax = np.array([b.v_max_sq for b in case.buses])
    slack = case.slack - 1
    vmin[slack] = vmax[slack] = 1.0
    put("W", vmin, vmax)
    if options.mode == "rpc":
        put("qR", np.array([r.q_min for r in case.rpcs]), np.array([r.q_max for r in case.rpcs]))
    if options.mode == "ess":
        ess = case.ess_candidates
        put("pch", 0.0, np.array([e.p_ch_max for e in ess]))
        put("pdis", 0.0, np.array([e.p_dis_max for e in ess]))
        put("qinv", -np.array([e.q_inv_min for e in ess]), np.array([e.q_inv_max for e in ess]))
        put("e", 0.0, np.array([e.e_max for e in ess]))
        put("E", 0.0, np.array([e.e_max for e in ess]))
        for k in BINARY_KINDS:
            put(k, 0.0, 1.0)
    return lb, ub


def build(case: NetworkCase, scenarios: ScenarioSet, options: BuildOptions | None = None) -> PlanningModel:
    """Assemble the planning model (current equality relaxed to a rotated cone)."""
    options = options or BuildOptions()
    topo = validate_case(case)
    if options.mode == "ess" and not case.ess_candidates:
        raise ModelError("mode 'ess' requested but the case has no ESS candidates")
    scenarios = normalize_weights(scenarios)
    S, T = len(scenarios), scenarios.hours_per_day
    vs = VariableSpace(_elements(case, topo, options), S, T)
    rows = _Rows()
    for omega, scen in enumerate(scenarios):
        for t in range(T):
            build_distflow_rows(rows, vs, case, topo, omega, t)
            build_nodal_rows(rows, vs, case, topo, scen, omega, t, options)
            if options.mode == "ess":
                build_ess_rows(rows, vs, case, omega, t)
    if options.mode == "ess":
        for e in case.ess_candidates:
            rows.add("<", (None, None, "siting", e.bus), [vs.col("E", e.bus), vs.col("y", e.bus)], [1.0, -e.e_max], 0.0)
        ys = [vs.col("y", e.bus) for e in case.ess_candidates]
        rows.add("<", (None, None, "site_count", 0), ys, [1.0] * len(ys), float(options.max_sites))

    n = vs.n
    A_eq = sp.csr_matrix((rows.eq[2], (rows.eq[0], rows.eq[1])), shape=(rows.n_eq, n))
    A_in = sp.csr_matrix((rows.ineq[2], (rows.ineq[0], rows.ineq[1])), shape=(rows.n_in, n))
    G = sp.csr_matrix((rows.cone_vals, (rows.cone_rows, rows.cone_cols)), shape=(len(rows.h), n))
    lb, ub = _bounds(vs, case, options)
    cost = build_objective(vs, case, scenarios, options)
    prob = ConicProblem(
        P=cost["P"],
        c=cost["c_gen"] + cost["c_inv"] + cost["c_op"],
        A_eq=A_eq, b_eq=np.array(rows.eq[3]),
        A_in=A_in, b_in=np.array(rows.ineq[3]),
        lb=lb, ub=ub,
        G=G, h=np.array(rows.h), soc_dims=np.array(rows.dims, dtype=np.int64),
        c0=cost["c0"],
        rotated=np.array(rows.rotated, dtype=np.int64).reshape(-1, 4),
    )
    binaries = np.concatenate([vs.cols(k).ravel() for k in BINARY_KINDS]) if options.mode == "ess" else np.zeros(0, dtype=np.int64)
    return PlanningModel(
        case=case, scenarios=scenarios, options=options, topology=topo, vs=vs, problem=prob,
        binaries=np.sort(binaries), eq_labels=rows.eq[4], in_labels=rows.ineq[4], cone_labels=rows.cone_labels,
        cost_parts=cost,
    )
