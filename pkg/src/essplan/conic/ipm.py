"""Primal-dual interior-point method for quadratic-objective cone programs.

Runs on the homogeneous self-dual embedding::

    P x + A'z + q tau         = 0
    A x + s   - b tau         = 0
    q'x + b'z + x'P x / tau + kappa = 0,     (s, z) in K x K*, tau, kappa >= 0

so a run ends either at an optimal point (tau > 0) or at an infeasibility
certificate (kappa > 0), never at an iteration-limit guess.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .cones import ConeSpec, NTScaling
from .kkt import KKTSystem
from .problem import ConicProblem, Multipliers, PresolveInfeasible, cone_violation, identity_presolve, presolve

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
NUMERICAL = "numerical-limit"


@dataclass
class Tolerances:
    feas: float = 1e-8
    gap: float = 1e-8
    infeas: float = 1e-9
    max_iter: int = 200
    # give up early when the residuals stop improving for this many iterations
    stall_iters: int = 25
    step_fraction: float = 0.99
    static_reg: float = 1e-8


@dataclass
class ContinuousSolution:
    status: str
    x: np.ndarray | None
    duals: Multipliers | None
    objective: float
    kkt_residuals: dict
    iterations: int
    certificate: Multipliers | None = None
    history: list = field(default_factory=list)
    presolve_log: dict = field(default_factory=dict)
    solve_time: float = 0.0

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


def _inf_norm(v) -> float:
    return float(np.max(np.abs(v), initial=0.0))


class _StandardForm:
    """``A_e x = b_e`` and ``h_c - G_c x in K`` with all inequalities as cone rows."""

    def __init__(self, prob: ConicProblem):
        n = prob.n
        self.iu = np.flatnonzero(np.isfinite(prob.ub))
        self.il = np.flatnonzero(np.isfinite(prob.lb))
        self.m_in = prob.b_in.shape[0]
        eye = sp.identity(n, format="csr")
        self.G = sp.vstack([prob.A_in, eye[self.iu], -eye[self.il], prob.G], format="csr")
        self.h = np.concatenate([prob.b_in, prob.ub[self.iu], -prob.lb[self.il], prob.h])
        self.spec = ConeSpec(self.m_in + self.iu.shape[0] + self.il.shape[0], prob.soc_dims)
        self.A = prob.A_eq
        self.b = prob.b_eq
        self.P = prob.P
        self.q = prob.c
        self.n = n

    def multipliers(self, z_e, z_c, prob: ConicProblem) -> Multipliers:
        out = Multipliers.zeros(prob)
        out.y_eq[:] = z_e
        k = self.m_in
        out.y_in[:] = z_c[:k]
        out.y_ub[self.iu] = z_c[k : k + self.iu.shape[0]]
        k += self.iu.shape[0]
        out.y_lb[self.il] = z_c[k : k + self.il.shape[0]]
        k += self.il.shape[0]
        out.z[:] = z_c[k:]
        return out


def kkt_residuals(prob: ConicProblem, x: np.ndarray, duals: Multipliers) -> dict:
    """Scaled primal, dual and gap residuals of a primal-dual pair."""
    eq = np.abs(prob.A_eq @ x - prob.b_eq) / (1 + np.maximum(_row_max(prob.A_eq), np.abs(prob.b_eq)))
    ineq = np.maximum(prob.A_in @ x - prob.b_in, 0) / (1 + np.maximum(_row_max(prob.A_in), np.abs(prob.b_in)))
    bnd = np.maximum(np.maximum(prob.lb - x, x - prob.ub), 0)
    bnd = np.where(np.isfinite(bnd), bnd, 0) / (1 + np.abs(x))
    cone = cone_violation(prob.cone_slack(x), prob.soc_dims)
    primal = max(_inf_norm(eq), _inf_norm(ineq), _inf_norm(bnd), _inf_norm(cone))

    r, beta = duals.aggregate(prob)
    grad = prob.P * x + prob.c
    dual = _inf_norm(grad + r) / (1 + _inf_norm(prob.c))
    sign = max(
        float(np.max(-duals.y_in, initial=0)), float(np.max(-duals.y_lb, initial=0)), float(np.max(-duals.y_ub, initial=0)),
        float(np.max(cone_violation(duals.z, prob.soc_dims), initial=0)),
    )
    dual = max(dual, sign / (1 + _inf_norm(prob.c)))
    pobj = prob.objective(x)
    dobj = float(-0.5 * np.dot(prob.P * x, x) - beta + prob.c0)
    gap = abs(pobj - dobj) / max(1.0, abs(pobj))
    return {"primal": primal, "dual": dual, "gap": gap, "pobj": pobj, "dobj": dobj}


def _row_max(A: sp.csr_matrix) -> np.ndarray:
    if A.shape[0] == 0:
        return np.zeros(0)
    return np.asarray(abs(A).max(axis=1).todense()).ravel()


def solve_conic(
    prob: ConicProblem,
    tol: Tolerances | None = None,
    *,
    use_presolve: bool = True,
    stream=None,
    factorization: str | None = None,
) -> ContinuousSolution:
    """Solve ``prob``; see :class:`ContinuousSolution` for the outcome fields.

    ``stream`` receives one line per iteration when given.
    """
    tol = tol or Tolerances()
    t0 = time.perf_counter()
    try:
        pre = presolve(prob) if use_presolve else identity_presolve(prob)
    except PresolveInfeasible as exc:
        log.debug("presolve: %s", exc.reason)
        return ContinuousSolution(INFEASIBLE, None, None, np.nan, {}, 0, certificate=exc.certificate,
                                  presolve_log={"reason": exc.reason}, solve_time=time.perf_counter() - t0)
    red = pre.problem
    if red.n == 0:
        x = pre.expand_x(np.zeros(0))
        duals = pre.expand_multipliers(Multipliers.zeros(red), x)
        res = kkt_residuals(prob, x, duals)
        return ContinuousSolution(OPTIMAL, x, duals, prob.objective(x), res, 0, presolve_log=pre.log,
                                  solve_time=time.perf_counter() - t0)

    run = _IPM(red, tol, stream, factorization)
    status = run.solve()
    elapsed = time.perf_counter() - t0
    if status == OPTIMAL:
        x = pre.expand_x(run.x_red)
        x = np.clip(x, prob.lb, prob.ub)
        duals = pre.expand_multipliers(run.duals_red, x)
        res = kkt_residuals(prob, x, duals)
        return ContinuousSolution(OPTIMAL, x, duals, prob.objective(x), res, run.k, history=run.history,
                                  presolve_log=pre.log, solve_time=elapsed)
    if status == INFEASIBLE:
        cert = pre.expand_multipliers(run.cert_red, None)
        _, beta = cert.aggregate(prob)
        if beta < 0:
            cert = cert.scaled(-1.0 / beta)
        return ContinuousSolution(INFEASIBLE, None, None, np.nan, {}, run.k, certificate=cert, history=run.history,
                                  presolve_log=pre.log, solve_time=elapsed)
    return ContinuousSolution(status, None, None, np.nan, run.last_residuals, run.k, history=run.history,
                              presolve_log=pre.log, solve_time=elapsed)


class _IPM:
    def __init__(self, prob: ConicProblem, tol: Tolerances, stream, factorization):
        self.prob = prob
        self.tol = tol
        self.stream = stream
        self.sf = _StandardForm(prob)
        self.factorization = factorization
        self.history: list = []
        self.k = 0
        self.last_residuals: dict = {}

    def _log(self, msg):
        if self.stream is not None:
            print(msg, file=self.stream)

    def solve(self) -> str:
        sf, tol = self.sf, self.tol
        spec = sf.spec
        n, p, m = sf.n, sf.A.shape[0], spec.dim
        P, q, A, b, G, h = sf.P, sf.q, sf.A, sf.b, sf.G, sf.h
        AT, GT = A.T.tocsr(), G.T.tocsr()
        kkt = KKTSystem(P, A, G, spec, self.factorization)
        reg = tol.static_reg

        # initial point from two least-squares-like solves with W = I
        ident = NTScaling(spec, np.ones(spec.nn), spec.identity.copy(), np.ones(spec.soc_dims.shape[0]),
                          _identity_wbar(spec))
        kkt.factor(ident, reg, reg)
        x, _, zc = kkt.solve(np.zeros(n), b, h)
        s = spec.interior_shift(-zc)
        _, ze, zc = kkt.solve(-q, np.zeros(p), np.zeros(m))
        z = spec.interior_shift(zc)
        tau, kappa = 1.0, 1.0

        norm_q = _inf_norm(q)
        norm_b = max(_inf_norm(b), _inf_norm(h))
        nu = spec.degree + 1
        best, best_k = None, 0
        self._log(f"{'it':>4} {'pobj':>14} {'dobj':>14} {'pres':>9} {'dres':>9} {'gap':>9} {'mu':>9} {'step':>6}")
        step = 0.0
        for k in range(tol.max_iter + 1):
            self.k = k
            Px = P * x
            xPx = float(x @ Px)
            r_x = Px + AT @ ze + GT @ z + q * tau
            r_e = A @ x - b * tau
            r_c = G @ x + s - h * tau
            r_tau = float(q @ x + b @ ze + h @ z + xPx / tau + kappa)
            mu = (float(s @ z) + tau * kappa) / nu

            # unscaled iterate
            xb, zeb, zcb, sb = x / tau, ze / tau, z / tau, s / tau
            pobj = 0.5 * xPx / tau**2 + float(q @ xb)
            dobj = -0.5 * xPx / tau**2 - float(b @ zeb) - float(h @ zcb)
            pres = max(_inf_norm(r_e), _inf_norm(r_c)) / tau / (1 + max(norm_b, _inf_norm(A @ xb), _inf_norm(sb)))
            dres = _inf_norm(r_x) / tau / (1 + max(norm_q, _inf_norm(Px) / tau, _inf_norm(AT @ zeb + GT @ zcb)))
            gap = abs(pobj - dobj) / max(1.0, abs(pobj))
            comp = float(s @ z) / tau**2
            rec = {"iter": k, "pobj": pobj, "dobj": dobj, "pres": pres, "dres": dres, "gap": gap, "mu": mu,
                   "tau": tau, "kappa": kappa, "step": step,
                   "comp": comp, "xr": float(xb @ (r_x / tau)), "zr": float(zeb @ (r_e / tau) + zcb @ (r_c / tau))}
            self.history.append(rec)
            self.last_residuals = {"primal": pres, "dual": dres, "gap": gap}
            self._log(f"{k:4d} {pobj:14.7e} {dobj:14.7e} {pres:9.2e} {dres:9.2e} {gap:9.2e} {mu:9.2e} {step:6.3f}")

            if pres <= 0.5 * tol.feas and dres <= 0.5 * tol.feas and gap <= 0.5 * tol.gap:
                self._finish_optimal(x, ze, z, tau)
                return OPTIMAL
            # infeasibility certificates
            bz = float(b @ ze + h @ z)
            if bz < 0:
                aty = _inf_norm(AT @ ze + GT @ z) / (-bz)
                if aty <= tol.infeas * max(1.0, 1.0 / (1 + norm_b)):
                    self._finish_infeasible(ze, z, bz)
                    return INFEASIBLE
            qx = float(q @ x)
            if qx < 0:
                px = _inf_norm(Px) / (-qx)
                axs = max(_inf_norm(A @ x), _inf_norm(G @ x + s)) / (-qx)
                if px <= tol.infeas and axs <= tol.infeas:
                    return UNBOUNDED
            worst = max(pres, dres, gap)
            if best is None or worst < 0.5 * best:
                best, best_k = worst, k
            if k == tol.max_iter or k - best_k > tol.stall_iters:
                break
            if k > 5 and step < 1e-10:
                break

            W = spec.nt_scaling(s, z)
            lam = W.lam
            try:
                kkt.factor(W, reg, reg)
            except Exception as exc:  # factorization breakdown
                log.debug("factorization failed: %s", exc)
                break
            xi = x / tau
            qt = q + 2 * P * xi
            x2, ze2, zc2 = kkt.solve(-q, b, h)
            denom = float(qt @ x2 + b @ ze2 + h @ zc2) - float(xi @ (P * xi)) - kappa / tau

            def direction(d_x, d_e, d_c, d_tau, d_s, d_kappa):
                ws = W.apply(spec.jdiv(lam, d_s))  # W'(lam \ d_s), W symmetric
                x1, ze1, zc1 = kkt.solve(-d_x, -d_e, -d_c + ws)
                dtau = (-d_tau + d_kappa / tau - float(qt @ x1) - float(b @ ze1 + h @ zc1)) / denom
                dx = x1 + dtau * x2
                dze = ze1 + dtau * ze2
                dzc = zc1 + dtau * zc2
                ds = -ws - W.apply(W.apply(dzc))
                dkappa = -(d_kappa + kappa * dtau) / tau
                return dx, dze, dzc, ds, dtau, dkappa

            def max_step(ds, dzc, dtau, dkappa):
                a = min(spec.max_step(s, ds), spec.max_step(z, dzc))
                if dtau < 0:
                    a = min(a, -tau / dtau)
                if dkappa < 0:
                    a = min(a, -kappa / dkappa)
                return a

            # predictor
            d_s = spec.jdot(lam, lam)
            aff = direction(r_x, r_e, r_c, r_tau, d_s, tau * kappa)
            a_aff = min(1.0, max_step(aff[3], aff[2], aff[4], aff[5]))
            sigma = (1.0 - a_aff) ** 3
            # corrector
            dsa = W.apply_inv(aff[3])
            dza = W.apply(aff[2])
            d_s = d_s + spec.jdot(dsa, dza) - sigma * mu * spec.identity
            d_kappa = tau * kappa + aff[4] * aff[5] - sigma * mu
            eta = 1.0 - sigma
            dx, dze, dzc, ds, dtau, dkappa = direction(eta * r_x, eta * r_e, eta * r_c, eta * r_tau, d_s, d_kappa)
            step = min(1.0, tol.step_fraction * max_step(ds, dzc, dtau, dkappa))
            x = x + step * dx
            ze = ze + step * dze
            z = z + step * dzc
            s = s + step * ds
            tau = tau + step * dtau
            kappa = kappa + step * dkappa
        return NUMERICAL

    def _finish_optimal(self, x, ze, z, tau):
        sf = self.sf
        self.x_red = x / tau
        self.duals_red = sf.multipliers(ze / tau, z / tau, self.prob)

    def _finish_infeasible(self, ze, z, bz):
        sf = self.sf
        self.cert_red = sf.multipliers(ze / (-bz), z / (-bz), self.prob)


def _identity_wbar(spec: ConeSpec) -> np.ndarray:
    w = np.zeros(spec.dim - spec.nn)
    w[spec.soc_starts - spec.nn] = 1.0
    return w
