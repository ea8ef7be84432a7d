"""Branch-and-bound over the storage binaries, plus an enumeration oracle.

The binaries only act as indicators (charging, discharging, siting), so a
relaxed point can usually be completed by reading the binaries off the
continuous values.  Each node therefore solves its relaxation, tries that
rounding as an incumbent (one more conic solve with every binary fixed) and
branches only on binaries whose rounding conflicts: both directions active
in one hour, or more storage sites in use than allowed.
"""

from __future__ import annotations

import heapq
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .conic import INFEASIBLE, OPTIMAL, ConicProblem, Tolerances, solve_conic
from .model import PlanningModel

log = logging.getLogger(__name__)

PRIORITY = {"y": 0, "xch": 1, "xdis": 1}


class BranchingError(RuntimeError):
    pass


@dataclass
class MipOptions:
    gap_tol: float = 1e-4
    time_limit: float | None = None
    int_tol: float = 1e-6
    max_nodes: int | None = None
    tolerances: Tolerances = field(default_factory=Tolerances)
    # incumbents are re-solved tighter so that storage balances close to 1e-9
    polish: Tolerances = field(default_factory=lambda: Tolerances(feas=1e-10, gap=1e-10))
    stream: object = None


@dataclass
class MipSolution:
    status: str
    x: np.ndarray | None
    objective: float
    bound: float
    nodes: int
    wall_time: float
    history: list = field(default_factory=list)
    binaries: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)
    reductions: list = field(default_factory=list)
    node_bounds: list = field(default_factory=list)  # (node, parent, relaxation objective)
    incumbents: list = field(default_factory=list)

    @property
    def gap(self) -> float:
        if self.x is None or not np.isfinite(self.bound):
            return float("nan") if self.x is None else float("inf")
        return max(0.0, (self.objective - self.bound) / max(1.0, abs(self.objective)))

    @property
    def feasible(self) -> bool:
        return self.x is not None


@dataclass(order=True)
class _Node:
    key: tuple
    id: int = field(compare=False)
    parent: int = field(compare=False)
    depth: int = field(compare=False)
    fix: dict = field(compare=False)
    bound: float = field(compare=False)


def branching_rule(values: dict, kinds: dict, int_tol: float = 1e-6):
    """Pick the column to branch on.

    ``values`` maps candidate column ids to relaxation values, ``kinds`` maps
    them to ``"y"``, ``"xch"`` or ``"xdis"``.  Siting binaries go first, then
    the most fractional value, then the lowest column id.  Returns ``None``
    when every value is integral within ``int_tol``.
    """
    best = None
    for j in sorted(values):
        v = values[j]
        frac = min(v, 1.0 - v)
        if frac <= int_tol:
            continue
        key = (PRIORITY[kinds[j]], -frac, j)
        if best is None or key < best[0]:
            best = (key, j)
    return None if best is None else best[1]


class _Structure:
    """Column groups of one storage model, used for implications and rounding."""

    def __init__(self, model: PlanningModel):
        vs = model.vs
        self.model = model
        self.buses = vs.elements["y"]
        self.y = vs.cols("y")
        self.E = vs.cols("E")
        self.kind = {}
        if not self.buses:
            return
        for k in ("pch", "pdis", "qinv", "e", "xch", "xdis"):
            setattr(self, k, vs.cols(k))  # (S, T, m)
        for k in ("y", "xch", "xdis"):
            for j in np.ravel(getattr(self, k)):
                self.kind[int(j)] = k
        ess = model.case.ess_candidates
        self.p_ch_max = np.array([e.p_ch_max for e in ess])
        self.p_dis_max = np.array([e.p_dis_max for e in ess])
        self.e_max = np.array([e.e_max for e in ess])
        self.q_scale = np.maximum(np.array([max(e.q_inv_min, e.q_inv_max) for e in ess]), 1e-12)

    def bounds(self, fix: dict, lb0: np.ndarray, ub0: np.ndarray) -> tuple[np.ndarray, np.ndarray] | None:
        """Bounds for a partial assignment plus the implications it carries.

        Returns ``None`` when the assignment itself violates a structural
        row (two directions in one hour, too many sites).
        """
        lb, ub = lb0.copy(), ub0.copy()
        for j, v in fix.items():
            lb[j] = ub[j] = float(v)
        if not self.buses:
            return lb, ub
        max_sites = self.model.options.max_sites
        ones = int(np.sum(lb[self.y] > 0.5))
        if ones > max_sites:
            return None
        if ones == max_sites:
            free = self.y[ub[self.y] > 0.5]
            free = free[lb[free] < 0.5]
            ub[free] = 0.0
        both = (lb[self.xch] > 0.5) & (lb[self.xdis] > 0.5)
        if both.any():
            return None
        ub[self.xdis[lb[self.xch] > 0.5]] = 0.0
        ub[self.xch[lb[self.xdis] > 0.5]] = 0.0
        for c in np.flatnonzero(ub[self.y] < 0.5):
            # no site: no capacity, energy, inverter or power
            ub[self.E[c]] = 0.0
            for k in ("pch", "pdis", "e", "xch", "xdis"):
                ub[getattr(self, k)[:, :, c]] = 0.0
            q = self.qinv[:, :, c]
            lb[q] = 0.0
            ub[q] = 0.0
        ub[self.pch[ub[self.xch] < 0.5]] = 0.0
        ub[self.pdis[ub[self.xdis] < 0.5]] = 0.0
        if np.any(lb > ub):
            return None
        return lb, ub

    def rounding(self, x: np.ndarray, lb: np.ndarray, ub: np.ndarray, int_tol: float):
        """Binary values implied by the continuous part of ``x``.

        Returns ``(assignment, conflicts)`` where ``conflicts`` lists the
        binary columns whose rounding is ambiguous.
        """
        assign: dict[int, float] = {}
        conflicts: list[int] = []
        if not self.buses:
            return assign, conflicts
        pch = x[self.pch] > int_tol * self.p_ch_max
        pdis = x[self.pdis] > int_tol * self.p_dis_max
        both = pch & pdis
        xch = np.where(lb[self.xch] > 0.5, True, pch)
        xdis = np.where(lb[self.xdis] > 0.5, True, pdis)
        # ambiguous hours keep the larger direction for the heuristic
        pick_ch = x[self.pch] / self.p_ch_max >= x[self.pdis] / self.p_dis_max
        xch = np.where(both, pick_ch, xch)
        xdis = np.where(both, ~pick_ch, xdis)
        for j in np.concatenate([self.xch[both], self.xdis[both]]):
            if lb[j] < 0.5 < ub[j]:
                conflicts.append(int(j))

        used = (
            (x[self.E] > int_tol * self.e_max)
            | (np.abs(x[self.qinv]) > int_tol * self.q_scale).any(axis=(0, 1))
            | pch.any(axis=(0, 1)) | pdis.any(axis=(0, 1))
            | (lb[self.y] > 0.5)
        )
        max_sites = self.model.options.max_sites
        if used.sum() > max_sites:
            conflicts.extend(int(j) for j in self.y[used] if lb[j] < 0.5 < ub[j])
            # keep the sites the relaxation leans on most (fixed sites first)
            score = x[self.y] + (lb[self.y] > 0.5) * 2.0
            keep = np.argsort(-score, kind="stable")[:max_sites]
            used = np.zeros_like(used)
            used[keep] = True
        xch &= used[None, None, :]
        xdis &= used[None, None, :]
        for cols, vals in ((self.y, used), (self.xch, xch), (self.xdis, xdis)):
            for j, v in zip(np.ravel(cols), np.ravel(vals)):
                assign[int(j)] = 1.0 if v else 0.0
        return assign, conflicts


def tighten_indicators(model: PlanningModel) -> tuple[ConicProblem, list]:
    """Strengthen charge/discharge indicator rows using the energy capacity.

    Over one hour the stored energy bounds the throughput:
    ``p_dis <= eta_dis * E_max`` and ``p_ch <= E_max / eta_ch``.  When that is
    below the converter rating, the coefficient of the indicator binary is
    reduced accordingly.  Returns the new problem and a reduction log.
    """
    prob = model.problem
    if not model.vs.elements["y"]:
        return prob, []
    A = prob.A_in.tocsr(copy=True)
    ub = prob.ub.copy()
    log_: dict = {}
    by_bus = {e.bus: e for e in model.case.ess_candidates}
    vs = model.vs
    for r, lab in enumerate(model.in_labels):
        kind = lab[2]
        if kind not in ("charge_limit", "discharge_limit"):
            continue
        e = by_bus[lab[3]]
        if kind == "charge_limit":
            cap, rating, pk, xk = e.e_max / e.eta_ch, e.p_ch_max, "pch", "xch"
        else:
            cap, rating, pk, xk = e.eta_dis * e.e_max, e.p_dis_max, "pdis", "xdis"
        if cap >= rating:
            continue
        xj = vs.col(xk, lab[3], lab[1], lab[0])
        pj = vs.col(pk, lab[3], lab[1], lab[0])
        lo, hi = A.indptr[r], A.indptr[r + 1]
        pos = lo + int(np.flatnonzero(A.indices[lo:hi] == xj)[0])
        A.data[pos] = -cap
        ub[pj] = min(ub[pj], cap)
        log_.setdefault((kind, lab[3]), (rating, cap))
    reductions = [f"{k} at bus {b}: indicator coefficient {r:g} -> {c:g}" for (k, b), (r, c) in log_.items()]
    return prob.copy(A_in=A, ub=ub), reductions


def _solve(prob: ConicProblem, lb, ub, tol: Tolerances, retry: bool = True):
    sol = solve_conic(prob.copy(lb=lb, ub=ub), tol)
    if retry and sol.status not in (OPTIMAL, INFEASIBLE):
        # one retry without presolve before giving up on the node
        sol2 = solve_conic(prob.copy(lb=lb, ub=ub), tol, use_presolve=False)
        if sol2.status in (OPTIMAL, INFEASIBLE):
            return sol2
    return sol


def _gap(obj, bound):
    return max(0.0, (obj - bound) / max(1.0, abs(obj)))


def solve_miqcp(model: PlanningModel, opts: MipOptions | None = None) -> MipSolution:
    """Solve the planning model to ``opts.gap_tol``.

    Nodes are explored best-bound first, with depth-first plunging until the
    first incumbent is found.
    """
    opts = opts or MipOptions()
    t0 = time.perf_counter()
    st = _Structure(model)
    prob, reductions = tighten_indicators(model)
    history: list = []
    flags: list = []

    def emit(n, bound, inc):
        gap = _gap(inc, bound) if np.isfinite(inc) else float("inf")
        line = f"node={n} bound={bound:.6f} incumbent={inc:.6f} gap={100 * gap:.4f}%"
        history.append(line)
        if opts.stream is not None:
            print(line, file=opts.stream)

    if model.n_binaries == 0:
        # nothing to branch on: the relaxation is the problem
        sol = _solve(prob, prob.lb, prob.ub, opts.polish, retry=False)
        if sol.status != OPTIMAL:
            sol = _solve(prob, prob.lb, prob.ub, opts.tolerances)
        if sol.status == OPTIMAL:
            emit(1, sol.objective, sol.objective)
            return MipSolution("optimal", sol.x.copy(), sol.objective, sol.objective, 1,
                               time.perf_counter() - t0, history, reductions=reductions)
        status = "infeasible" if sol.status == INFEASIBLE else sol.status
        emit(1, np.inf if status == "infeasible" else -np.inf, np.inf)
        return MipSolution(status, None, np.nan, np.inf if status == "infeasible" else -np.inf, 1,
                           time.perf_counter() - t0, history, reductions=reductions)

    inc_x, inc_obj = None, np.inf
    tried: set = set()
    incumbents: list = []  # every accepted incumbent, in order
    counter = 0
    open_: list = [_Node((-np.inf, 0, 0), 0, -1, 0, {}, -np.inf)]
    plunge: list = []
    closed: list = []  # bounds of leaves fathomed by bound or gap
    bound_log: list = []
    nodes = 0
    status = None

    def try_incumbent(assign):
        nonlocal inc_x, inc_obj
        key = tuple(sorted(assign.items()))
        if key in tried:
            return
        tried.add(key)
        b = st.bounds(assign, prob.lb, prob.ub)
        if b is None:
            return
        sol = _solve(prob, b[0], b[1], opts.tolerances)
        if sol.status != OPTIMAL or sol.objective >= inc_obj:
            return
        # only improving incumbents are re-solved at the tighter tolerance
        fine = _solve(prob, b[0], b[1], opts.polish, retry=False)
        if fine.status == OPTIMAL:
            sol = fine
        else:
            flags.append(f"incumbent {sol.objective:.6f}: polish ended with {fine.status}")
        if sol.objective < inc_obj:
            x = sol.x.copy()
            x[model.binaries] = np.round(x[model.binaries])
            inc_x, inc_obj = x, sol.objective
            incumbents.append(x)

    def fathomed(bound):
        return bound >= inc_obj or (np.isfinite(inc_obj) and _gap(inc_obj, bound) <= opts.gap_tol)

    while open_ or plunge:
        if inc_x is not None and plunge:
            for ch in plunge:
                heapq.heappush(open_, ch)
            plunge = []
        if opts.time_limit is not None and time.perf_counter() - t0 > opts.time_limit:
            status = "time-limit"
            break
        if opts.max_nodes is not None and nodes >= opts.max_nodes:
            status = "node-limit"
            break
        node = plunge.pop() if plunge else heapq.heappop(open_)
        if fathomed(node.bound):
            closed.append(node.bound)
            continue
        b = st.bounds(node.fix, prob.lb, prob.ub)
        if b is None:
            continue
        nodes += 1
        sol = _solve(prob, b[0], b[1], opts.tolerances)
        if sol.status == INFEASIBLE:
            emit(nodes, node.bound, inc_obj)
            continue
        if sol.status != OPTIMAL:
            if node.id == 0:
                return MipSolution(sol.status, None, np.nan, -np.inf, nodes, time.perf_counter() - t0, history,
                                   flags=["root relaxation failed"], reductions=reductions)
            flags.append(f"node {node.id}: relaxation ended with {sol.status}; bound kept from parent")
            closed.append(node.bound)
            continue
        bound = max(node.bound, sol.objective)
        bound_log.append((node.id, node.parent, sol.objective))
        assign, conflicts = st.rounding(sol.x, b[0], b[1], opts.int_tol)
        if bound < inc_obj:
            try_incumbent(assign)
        emit(nodes, bound, inc_obj)
        if fathomed(bound):
            closed.append(bound)
            continue
        values = {j: float(sol.x[j]) for j in conflicts}
        j = branching_rule(values, st.kind, opts.int_tol)
        if j is None and conflicts:
            j = min(conflicts, key=lambda c: (PRIORITY[st.kind[c]], c))
        if j is None:
            # rounding was consistent but its re-solve did not close the gap
            flags.append(f"node {node.id}: no branching candidate; closed at its bound")
            closed.append(bound)
            continue
        for v in (0.0, 1.0):
            counter += 1
            fix = dict(node.fix)
            fix[j] = v
            ch = _Node((bound, node.depth + 1, counter), counter, node.id, node.depth + 1, fix, bound)
            if inc_x is None:
                plunge.append(ch)  # the up-branch is popped first
            else:
                heapq.heappush(open_, ch)

    pending = [n.bound for n in open_ + plunge]
    if inc_x is None:
        status = status or "infeasible"
        best_bound = min(pending + closed) if status != "infeasible" and (pending or closed) else np.inf
    else:
        status = status or "optimal"
        best_bound = min([inc_obj] + pending + closed)
    binaries = {int(j): int(round(inc_x[j])) for j in model.binaries} if inc_x is not None else {}
    return MipSolution(status, inc_x, inc_obj if inc_x is not None else np.nan, best_bound, nodes,
                       time.perf_counter() - t0, history, binaries, flags, reductions, bound_log, incumbents)


def brute_force(model: PlanningModel, limit: int = 24, tol: Tolerances | None = None) -> MipSolution:
    """Exact optimum by enumerating every binary assignment.

    Assignments are generated in lexicographic order of the binary columns,
    skipping those with charge and discharge both on in one hour; ties keep
    the first (lexicographically smallest) assignment.
    """
    t0 = time.perf_counter()
    cols = [int(j) for j in model.binaries]
    if len(cols) > limit:
        raise BranchingError(f"{len(cols)} binaries exceed the enumeration limit {limit}")
    tol = tol or Tolerances()
    st = _Structure(model)
    partner = {}
    if st.buses:
        for a, b in zip(np.ravel(st.xch), np.ravel(st.xdis)):
            partner[int(a)] = int(b)
            partner[int(b)] = int(a)
    prob = model.problem
    best = (np.inf, None, None)
    count = 0
    assign: dict[int, float] = {}

    def visit(k):
        nonlocal best, count
        if k == len(cols):
            count += 1
            lb, ub = prob.lb.copy(), prob.ub.copy()
            for j, v in assign.items():
                lb[j] = ub[j] = v
            sol = _solve(prob, lb, ub, tol)
            if sol.status == OPTIMAL and sol.objective < best[0] - 1e-9 * max(1.0, abs(best[0]) if np.isfinite(best[0]) else 1.0):
                best = (sol.objective, sol.x.copy(), dict(assign))
            return
        j = cols[k]
        for v in (0.0, 1.0):
            if v == 1.0 and assign.get(partner.get(j, -1)) == 1.0:
                continue
            assign[j] = v
            visit(k + 1)
            del assign[j]

    visit(0)
    obj, x, a = best
    wall = time.perf_counter() - t0
    if x is None:
        return MipSolution("infeasible", None, np.nan, np.inf, count, wall)
    return MipSolution("optimal", x, obj, obj, count, wall, binaries={j: int(v) for j, v in a.items()})
