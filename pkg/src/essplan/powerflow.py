"""Forward-backward sweep AC power flow for radial feeders.

Used as an independent check on relaxed DistFlow solutions: given the net
withdrawal at every non-slack bus, the sweep recovers complex voltages and
branch currents, from which ``w = |V|^2`` and ``l = |I|^2`` follow.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import NetworkCase, Topology, validate_radial


class PowerFlowError(RuntimeError):
    pass


@dataclass
class PowerFlowResult:
    voltage: np.ndarray  # complex, index bus id - 1
    current: np.ndarray  # complex, index branch number - 1, flowing away from the root
    iterations: int
    mismatch: float

    @property
    def w(self) -> np.ndarray:
        return np.abs(self.voltage) ** 2

    @property
    def l(self) -> np.ndarray:
        return np.abs(self.current) ** 2


def forward_backward_sweep(case: NetworkCase, p_withdraw, q_withdraw, v_slack: float = 1.0,
                           topo: Topology | None = None, tol: float = 1e-13, max_iter: int = 200) -> PowerFlowResult:
    """Solve the AC power flow for fixed net withdrawals (index bus id - 1).

    The slack entry of the withdrawal vectors is ignored.  Raises
    :class:`PowerFlowError` if the sweep does not settle within ``max_iter``
    passes, which in practice means the loading exceeds the feeder's
    voltage-collapse point.
    """
    topo = topo or validate_radial(case)
    n = case.n_bus
    s = np.asarray(p_withdraw, dtype=float) + 1j * np.asarray(q_withdraw, dtype=float)
    s = s.copy()
    s[topo.root - 1] = 0.0
    z = np.array([complex(b.r, b.x) for b in case.branches])
    order = [j for j in topo.order if j != topo.root]  # parents before children
    idx = np.array([j - 1 for j in order], dtype=int)
    par = np.array([topo.parent[j] - 1 for j in order], dtype=int)
    br = np.array([topo.branch_of[j] for j in order], dtype=int)

    v = np.full(n, complex(v_slack, 0.0))
    cur = np.zeros(len(case.branches), dtype=complex)
    for it in range(1, max_iter + 1):
        # backward: accumulate bus currents from the leaves up
        node_i = np.conj(s / v)
        acc = node_i.copy()
        for k in range(len(order) - 1, -1, -1):
            acc[par[k]] += acc[idx[k]]
            cur[br[k]] = acc[idx[k]]
        # forward: voltage drops from the root down
        v_new = v.copy()
        for k in range(len(order)):
            v_new[idx[k]] = v_new[par[k]] - z[br[k]] * cur[br[k]]
        diff = float(np.max(np.abs(v_new - v))) if n > 1 else 0.0
        v = v_new
        if diff <= tol:
            return PowerFlowResult(v, cur, it, diff)
        if not np.all(np.isfinite(v)):
            break
    raise PowerFlowError(f"sweep did not converge in {max_iter} iterations")


def sending_end_flows(case: NetworkCase, pf: PowerFlowResult, topo: Topology | None = None) -> dict:
    """Sending-end flows of a power-flow result in DistFlow variables.

    Returns per-branch ``P``, ``Q``, ``l`` and per-bus ``w`` so that a
    solution point can be compared entry by entry.
    """
    topo = topo or validate_radial(case)
    m = len(case.branches)
    P = np.zeros(m)
    Q = np.zeros(m)
    for j, k in topo.branch_of.items():
        i = topo.parent[j]
        sij = pf.voltage[i - 1] * np.conj(pf.current[k])
        P[k], Q[k] = sij.real, sij.imag
    return {"P": P, "Q": Q, "l": pf.l, "w": pf.w}


def replay_solution(model, x: np.ndarray) -> dict:
    """Re-run the AC power flow on the net withdrawals of a planning solution.

    Returns the largest deviation of ``w`` and ``l`` between the sweep and
    the solution over every scenario and hour, plus the worst sweep count.
    The slack voltage is taken from the solution.
    """
    vs, case = model.vs, model.case
    topo = model.topology
    W, L = x[vs.cols("W")], x[vs.cols("L")]
    pn, qn = x[vs.cols("pnet")], x[vs.cols("qnet")]
    rows = np.array(vs.elements["pnet"], dtype=int) - 1
    root = topo.root - 1
    out = {"w": 0.0, "l": 0.0, "iterations": 0}
    for o in range(vs.n_scen):
        for t in range(vs.hours):
            p = np.zeros(case.n_bus)
            q = np.zeros(case.n_bus)
            p[rows], q[rows] = pn[o, t], qn[o, t]
            pf = forward_backward_sweep(case, p, q, v_slack=float(np.sqrt(W[o, t, root])), topo=topo)
            out["w"] = max(out["w"], float(np.max(np.abs(pf.w - W[o, t]))))
            out["l"] = max(out["l"], float(np.max(np.abs(pf.l - L[o, t]))))
            out["iterations"] = max(out["iterations"], pf.iterations)
    return out
