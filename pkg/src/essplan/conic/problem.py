"""Conic problem data, presolve and dual/certificate postsolve.

Problem form::

    minimize    1/2 sum_j P_j x_j^2 + c'x + c0
    subject to  A_eq x  = b_eq
                A_in x <= b_in
                lb <= x <= ub
                h_k - G_k x  in  Q^{d_k}     (second-order cones)

``Q^d = {s : s_0 >= ||s_1:||}``.  Rotated cones ``p^2 + q^2 <= l w`` are
encoded by the builder as ``(l + w, l - w, 2p, 2q)``; their column tuples are
kept in ``rotated`` so that relaxation gaps can be measured afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

INF = np.inf


@dataclass
class ConicProblem:
    P: np.ndarray
    c: np.ndarray
    A_eq: sp.csr_matrix
    b_eq: np.ndarray
    A_in: sp.csr_matrix
    b_in: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    G: sp.csr_matrix
    h: np.ndarray
    soc_dims: np.ndarray
    c0: float = 0.0
    rotated: np.ndarray = field(default_factory=lambda: np.zeros((0, 4), dtype=np.int64))

    @property
    def n(self) -> int:
        return self.c.shape[0]

    def __post_init__(self):
        n = self.c.shape[0]
        self.P = np.asarray(self.P, dtype=float)
        self.c = np.asarray(self.c, dtype=float)
        self.lb = np.asarray(self.lb, dtype=float)
        self.ub = np.asarray(self.ub, dtype=float)
        self.b_eq = np.asarray(self.b_eq, dtype=float)
        self.b_in = np.asarray(self.b_in, dtype=float)
        self.h = np.asarray(self.h, dtype=float)
        self.soc_dims = np.asarray(self.soc_dims, dtype=np.int64)
        self.A_eq = sp.csr_matrix(self.A_eq, shape=(self.b_eq.shape[0], n))
        self.A_in = sp.csr_matrix(self.A_in, shape=(self.b_in.shape[0], n))
        self.G = sp.csr_matrix(self.G, shape=(self.h.shape[0], n))
        self.rotated = np.asarray(self.rotated, dtype=np.int64).reshape(-1, 4)
        if self.P.shape != (n,) or self.lb.shape != (n,) or self.ub.shape != (n,):
            raise ValueError("P, lb and ub must have one entry per variable")
        if np.any(self.P < 0):
            raise ValueError("quadratic diagonal must be nonnegative")
        if int(self.soc_dims.sum()) != self.h.shape[0] or np.any(self.soc_dims < 1):
            raise ValueError("cone dimensions must be positive and cover every cone row")

    @property
    def cone_starts(self) -> np.ndarray:
        return np.concatenate(([0], np.cumsum(self.soc_dims)[:-1])).astype(np.int64)

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * np.dot(self.P * x, x) + self.c @ x + self.c0)

    def copy(self, **changes) -> "ConicProblem":
        data = dict(
            P=self.P, c=self.c, A_eq=self.A_eq, b_eq=self.b_eq, A_in=self.A_in, b_in=self.b_in,
            lb=self.lb.copy(), ub=self.ub.copy(), G=self.G, h=self.h, soc_dims=self.soc_dims,
            c0=self.c0, rotated=self.rotated,
        )
        data.update(changes)
        return ConicProblem(**data)

    def cone_slack(self, x: np.ndarray) -> np.ndarray:
        return self.h - self.G @ x

    def primal_violation(self, x: np.ndarray) -> dict:
        """Absolute violations of every constraint family at ``x``."""
        out = {
            "eq": float(np.max(np.abs(self.A_eq @ x - self.b_eq), initial=0.0)),
            "in": float(np.max(self.A_in @ x - self.b_in, initial=0.0)),
            "bounds": float(max(np.max(self.lb - x, initial=0.0), np.max(x - self.ub, initial=0.0))),
        }
        s = self.cone_slack(x)
        out["cone"] = float(np.max(cone_violation(s, self.soc_dims), initial=0.0))
        return out


def cone_violation(s: np.ndarray, dims: np.ndarray) -> np.ndarray:
    """Per-cone ``max(0, ||s_1:|| - s_0)``."""
    dims = np.asarray(dims)
    if dims.size == 0:
        return np.zeros(0)
    starts = np.concatenate(([0], np.cumsum(dims)[:-1]))
    head = s[starts]
    sq = np.add.reduceat(s * s, starts) - head * head
    return np.maximum(0.0, np.sqrt(np.maximum(sq, 0.0)) - head)


@dataclass
class Multipliers:
    """Lagrange multipliers (or a Farkas certificate) on the original rows.

    The aggregated combination is::

        y_eq'(A_eq x - b_eq) + y_in'(A_in x - b_in) + y_ub'(x - ub)
            + y_lb'(lb - x) + z'(G x - h)  <=  0     for every feasible x,

    with ``y_in, y_ub, y_lb >= 0`` and ``z`` in the (self-dual) cones.
    """

    y_eq: np.ndarray
    y_in: np.ndarray
    y_lb: np.ndarray
    y_ub: np.ndarray
    z: np.ndarray

    @classmethod
    def zeros(cls, prob: ConicProblem) -> "Multipliers":
        return cls(
            np.zeros(prob.b_eq.shape[0]), np.zeros(prob.b_in.shape[0]),
            np.zeros(prob.n), np.zeros(prob.n), np.zeros(prob.h.shape[0]),
        )

    def aggregate(self, prob: ConicProblem) -> tuple[np.ndarray, float]:
        """Return ``(r, beta)`` such that the combination reads ``r'x - beta <= 0``."""
        r = prob.A_eq.T @ self.y_eq + prob.A_in.T @ self.y_in + self.y_ub - self.y_lb + prob.G.T @ self.z
        beta = float(
            self.y_eq @ prob.b_eq + self.y_in @ prob.b_in
            + _finite_dot(self.y_ub, prob.ub) - _finite_dot(self.y_lb, prob.lb) + self.z @ prob.h
        )
        return r, beta

    def scaled(self, alpha: float) -> "Multipliers":
        return Multipliers(*(alpha * v for v in (self.y_eq, self.y_in, self.y_lb, self.y_ub, self.z)))


def _finite_dot(y: np.ndarray, bound: np.ndarray) -> float:
    mask = y != 0
    if np.any(~np.isfinite(bound[mask])):
        raise ValueError("multiplier placed on an infinite bound")
    return float(y[mask] @ bound[mask])


@dataclass
class CertificateCheck:
    residual: float
    bound: float
    sign_violation: float
    cone_violation: float

    def ok(self, tol: float = 1e-6) -> bool:
        return self.bound <= -1.0 + tol and self.residual <= tol and self.sign_violation <= tol and self.cone_violation <= tol


def verify_certificate(prob: ConicProblem, cert: Multipliers) -> CertificateCheck:
    """Check a primal-infeasibility certificate normalized to ``beta = -1``.

    For every feasible x the combination gives ``r'x - beta <= 0``; with
    ``r = 0`` and ``beta = -1`` that reads ``1 <= 0``.
    """
    r, beta = cert.aggregate(prob)
    sign = max(
        float(np.max(-cert.y_in, initial=0.0)),
        float(np.max(-cert.y_lb, initial=0.0)),
        float(np.max(-cert.y_ub, initial=0.0)),
    )
    cv = float(np.max(cone_violation(cert.z, prob.soc_dims), initial=0.0))
    return CertificateCheck(float(np.max(np.abs(r), initial=0.0)), beta, sign, cv)


# ---------------------------------------------------------------------------
# presolve

class PresolveInfeasible(Exception):
    def __init__(self, reason: str, certificate: Multipliers):
        super().__init__(reason)
        self.reason = reason
        self.certificate = certificate


@dataclass
class Presolved:
    problem: ConicProblem
    cols: np.ndarray
    eq_rows: np.ndarray
    in_rows: np.ndarray
    cones: np.ndarray
    cone_rows: np.ndarray
    x_fixed: np.ndarray
    fixed_mask: np.ndarray
    events: list
    lb: np.ndarray
    ub: np.ndarray
    lb_src: list
    ub_src: list
    original: ConicProblem
    log: dict

    def expand_x(self, x_red: np.ndarray) -> np.ndarray:
        x = self.x_fixed.copy()
        x[self.cols] = x_red
        return x

    def expand_multipliers(self, red: Multipliers, x: np.ndarray | None) -> Multipliers:
        """Map multipliers of the reduced problem back to the original rows.

        ``x`` given: dual variables at an optimum (stationarity includes
        ``P x + c``).  ``x`` None: infeasibility certificate.
        """
        orig = self.original
        out = Multipliers.zeros(orig)
        out.y_eq[self.eq_rows] = red.y_eq
        out.y_in[self.in_rows] = red.y_in
        out.y_lb[self.cols] = red.y_lb
        out.y_ub[self.cols] = red.y_ub
        out.z[self.cone_rows] = red.z
        _unwind(self, out, x, len(self.events))
        return out


def _unwind(pre: "Presolved | _State", out: Multipliers, x, upto: int) -> None:
    orig = pre.original
    A_eq_c = orig.A_eq.tocsc()
    A_in_c = orig.A_in.tocsc()
    G_c = orig.G.tocsc()

    def column_residual(j):
        g = 0.0
        for A, y in ((A_eq_c, out.y_eq), (A_in_c, out.y_in), (G_c, out.z)):
            lo, hi = A.indptr[j], A.indptr[j + 1]
            g += float(A.data[lo:hi] @ y[A.indices[lo:hi]])
        g += out.y_ub[j] - out.y_lb[j]
        if x is not None:
            g += orig.P[j] * x[j] + orig.c[j]
        return g

    for ev in reversed(pre.events[:upto]):
        if ev[0] == "fix":
            j = ev[1]
            g = column_residual(j)
            if g > 0:
                out.y_lb[j] += g
            elif g < 0:
                out.y_ub[j] -= g
        else:
            _, j, side, kind, r, scale = ev
            mult = out.y_ub if side == "ub" else out.y_lb
            mu = mult[j]
            mult[j] = 0.0
            if mu != 0.0:
                if kind == "eq":
                    out.y_eq[r] += scale * mu
                else:
                    out.y_in[r] += scale * mu


class _State:
    def __init__(self, prob: ConicProblem):
        self.original = prob
        self.events: list = []


def presolve(prob: ConicProblem, tol: float = 1e-9) -> Presolved:
    """Remove fixed columns, drop empty rows and turn singleton rows into bounds.

    Every reduction is logged so that duals and infeasibility certificates of
    the reduced problem can be mapped back onto the original rows exactly.
    """
    n = prob.n
    lb = prob.lb.copy()
    ub = prob.ub.copy()
    state = _State(prob)
    events = state.events
    fixed = np.zeros(n, dtype=bool)
    xf = np.zeros(n)
    eq_alive = np.ones(prob.b_eq.shape[0], dtype=bool)
    in_alive = np.ones(prob.b_in.shape[0], dtype=bool)
    lb_src = [None] * n
    ub_src = [None] * n
    log = {"fixed": 0, "dropped_rows": 0, "tightened": 0, "dropped_cones": 0}

    def fail(reason, build):
        cert = Multipliers.zeros(prob)
        build(cert)
        _unwind(state, cert, None, len(events))
        _, beta = cert.aggregate(prob)
        if beta < 0:
            cert = cert.scaled(-1.0 / beta)
        raise PresolveInfeasible(reason, cert)

    def check_cross(j):
        if lb[j] > ub[j] + tol * (1 + abs(lb[j])):
            def build(cert):
                cert.y_lb[j] = 1.0
                cert.y_ub[j] = 1.0
            fail(f"bounds of column {j} cross", build)

    for j in range(n):
        check_cross(j)

    rows = {"eq": (prob.A_eq, prob.b_eq, eq_alive), "in": (prob.A_in, prob.b_in, in_alive)}
    changed = True
    while changed:
        changed = False
        with np.errstate(invalid="ignore"):
            near = np.isfinite(lb) & np.isfinite(ub) & (ub - lb <= tol * (1 + np.abs(lb)))
        newly = np.flatnonzero(~fixed & near)
        for j in newly:
            check_cross(j)
            val = lb[j] if lb[j] == ub[j] else 0.5 * (lb[j] + ub[j])
            if np.isfinite(val):
                fixed[j] = True
                xf[j] = val
                events.append(("fix", int(j)))
                log["fixed"] += 1
                changed = True
        for kind, (A, b, alive) in rows.items():
            act = A.copy()
            act.data = act.data * (~fixed)[act.indices]
            act.eliminate_zeros()
            counts = np.diff(act.indptr)
            resid = b - A @ xf
            for r in np.flatnonzero(alive & (counts <= 1)):
                if counts[r] == 0:
                    rho = resid[r]
                    if kind == "eq" and abs(rho) > tol * (1 + abs(b[r])):
                        def build(cert, r=r, rho=rho):
                            cert.y_eq[r] = -np.sign(rho)
                        fail(f"empty equality row {r} is inconsistent", build)
                    if kind == "in" and rho < -tol * (1 + abs(b[r])):
                        def build(cert, r=r):
                            cert.y_in[r] = 1.0
                        fail(f"empty inequality row {r} is violated", build)
                    alive[r] = False
                    log["dropped_rows"] += 1
                    changed = True
                    continue
                j = int(act.indices[act.indptr[r]])
                a = float(act.data[act.indptr[r]])
                signs = (1.0, -1.0) if kind == "eq" else (1.0,)
                for s in signs:
                    alpha = s * a
                    bound = s * resid[r] / alpha
                    if alpha > 0 and bound < ub[j]:
                        ub[j] = bound
                        events.append(("tighten", j, "ub", kind, int(r), s / abs(alpha)))
                        ub_src[j] = (kind, int(r))
                        log["tightened"] += 1
                    elif alpha < 0 and bound > lb[j]:
                        lb[j] = bound
                        events.append(("tighten", j, "lb", kind, int(r), s / abs(alpha)))
                        lb_src[j] = (kind, int(r))
                        log["tightened"] += 1
                check_cross(j)
                alive[r] = False
                log["dropped_rows"] += 1
                changed = True

    # cones whose columns are all fixed are constants
    starts = prob.cone_starts
    Gc = prob.G.copy()
    Gc.data = Gc.data * (~fixed)[Gc.indices]
    Gc.eliminate_zeros()
    row_active = np.diff(Gc.indptr) > 0
    keep_cone = np.ones(prob.soc_dims.shape[0], dtype=bool)
    s_const = prob.h - prob.G @ xf
    for k, (st, d) in enumerate(zip(starts, prob.soc_dims)):
        if row_active[st:st + d].any():
            continue
        s = s_const[st:st + d]
        nrm = float(np.linalg.norm(s[1:]))
        if s[0] < nrm - tol * (1 + nrm):
            def build(cert, st=st, d=d, s=s, nrm=nrm):
                cert.z[st] = 1.0
                if nrm > 0:
                    cert.z[st + 1:st + d] = -s[1:] / nrm
            fail(f"constant cone {k} is violated", build)
        keep_cone[k] = False
        log["dropped_cones"] += 1

    cols = np.flatnonzero(~fixed)
    eq_rows = np.flatnonzero(eq_alive)
    in_rows = np.flatnonzero(in_alive)
    cones = np.flatnonzero(keep_cone)
    cone_rows = np.concatenate([np.arange(starts[k], starts[k] + prob.soc_dims[k]) for k in cones]) if cones.size else np.zeros(0, dtype=np.int64)

    A_eq = prob.A_eq[eq_rows]
    A_in = prob.A_in[in_rows]
    G = prob.G[cone_rows]
    red = ConicProblem(
        P=prob.P[cols],
        c=prob.c[cols],
        A_eq=A_eq[:, cols],
        b_eq=prob.b_eq[eq_rows] - A_eq @ xf,
        A_in=A_in[:, cols],
        b_in=prob.b_in[in_rows] - A_in @ xf,
        lb=lb[cols],
        ub=ub[cols],
        G=G[:, cols],
        h=prob.h[cone_rows] - G @ xf,
        soc_dims=prob.soc_dims[cones],
        c0=prob.c0 + float(prob.c @ xf + 0.5 * np.dot(prob.P * xf, xf)),
    )
    return Presolved(red, cols, eq_rows, in_rows, cones, cone_rows, xf, fixed, events, lb, ub, lb_src, ub_src, prob, log)


def identity_presolve(prob: ConicProblem) -> Presolved:
    n = prob.n
    return Presolved(
        prob, np.arange(n), np.arange(prob.b_eq.shape[0]), np.arange(prob.b_in.shape[0]),
        np.arange(prob.soc_dims.shape[0]), np.arange(prob.h.shape[0]), np.zeros(n), np.zeros(n, dtype=bool),
        [], prob.lb.copy(), prob.ub.copy(), [None] * n, [None] * n, prob, {},
    )
