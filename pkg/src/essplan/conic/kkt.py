"""Reduced KKT systems for the interior-point iterations.

The Newton system of the homogeneous embedding is::

    [ P    A_e'   G'    ] [dx ]   [r_x ]
    [ A_e  0      0     ] [dz_e] = [r_e ]
    [ G    0     -W'W   ] [dz_c]   [r_c ]

Cone rows (rays and second-order cones) are eliminated into the leading
block, ``M = P + G' (W'W)^{-1} G``, leaving the quasi-definite matrix
``[[M + eps I, A_e'], [A_e, -delta I]]`` whose sparsity pattern never
changes.  Its values are refreshed with one ``bincount`` per iteration and
factored either by the compiled LDL' kernel or by SuperLU.  Solutions are
refined against the full (unreduced, unregularized) system.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .cones import ConeSpec, NTScaling

try:  # pragma: no cover
    from essplan import _kernels as _ck
except ImportError:  # pragma: no cover
    _ck = None


def default_factorization() -> str:
    return "ldl" if _ck is not None else "splu"


def _amd_order(pattern: sp.csc_matrix) -> np.ndarray:
    try:
        import cvxopt
        import cvxopt.amd
    except ImportError:  # pragma: no cover
        return sp.csgraph.reverse_cuthill_mckee(pattern.tocsr(), symmetric_mode=True).astype(np.int64)
    low = sp.tril(pattern + pattern.T, format="coo")
    cm = cvxopt.spmatrix(1.0, low.row.tolist(), low.col.tolist(), size=pattern.shape)
    return np.array(list(cvxopt.amd.order(cm)), dtype=np.int64)


class KKTSystem:
    def __init__(self, P: np.ndarray, A_e: sp.csr_matrix, G: sp.csr_matrix, spec: ConeSpec, method: str | None = None):
        self.n = P.shape[0]
        self.p = A_e.shape[0]
        self.P = P
        self.A_e = sp.csr_matrix(A_e)
        self.A_eT = self.A_e.T.tocsr()
        self.G = sp.csr_matrix(G)
        self.GT = self.G.T.tocsr()
        self.spec = spec
        self.method = method or default_factorization()
        if self.method == "ldl" and _ck is None:
            raise RuntimeError("compiled LDL kernel not available")
        self._build_pattern()
        self.factor_count = 0

    # -- pattern --------------------------------------------------------------

    def _block_entries(self):
        """(entry index into hinv data, row a, row b) for every B entry."""
        spec = self.spec
        nn = spec.nn
        ent = [np.arange(nn)]
        ra = [np.arange(nn)]
        rb = [np.arange(nn)]
        for idx, cone_ids in zip(spec.groups, spec.group_cones):
            d = idx.shape[1]
            base = spec.block_offsets[cone_ids][:, None, None] + (np.arange(d)[:, None] * d + np.arange(d)[None, :])[None]
            A = np.broadcast_to(idx[:, :, None], base.shape)
            B = np.broadcast_to(idx[:, None, :], base.shape)
            ent.append(base.ravel())
            ra.append(A.ravel())
            rb.append(B.ravel())
        return np.concatenate(ent), np.concatenate(ra), np.concatenate(rb)

    def _build_pattern(self):
        n, p = self.n, self.p
        N = n + p
        G = self.G
        nnz_row = np.diff(G.indptr)
        ent, ra, rb = self._block_entries()
        na, nb = nnz_row[ra], nnz_row[rb]
        cnt = na * nb
        keep = cnt > 0
        ent, ra, rb, na, nb, cnt = ent[keep], ra[keep], rb[keep], na[keep], nb[keep], cnt[keep]
        owner = np.repeat(np.arange(ent.shape[0]), cnt)
        local = np.arange(owner.shape[0]) - np.repeat(np.cumsum(cnt) - cnt, cnt)
        ia = G.indptr[ra[owner]] + local // nb[owner]
        ib = G.indptr[rb[owner]] + local % nb[owner]
        ci, cj = G.indices[ia], G.indices[ib]
        coef = G.data[ia] * G.data[ib]
        upper = ci <= cj
        ci, cj, coef, src = ci[upper], cj[upper], coef[upper], ent[owner[upper]]

        Ae = self.A_e.tocoo()
        rows = np.concatenate([np.arange(N), ci, Ae.col])
        cols = np.concatenate([np.arange(N), cj, Ae.row + n])
        keys = cols.astype(np.int64) * N + rows
        ukeys, inv = np.unique(keys, return_inverse=True)
        self.nnz = ukeys.shape[0]
        self.up_rows = (ukeys % N).astype(np.int64)
        up_cols = (ukeys // N).astype(np.int64)
        self.up_indptr = np.concatenate(([0], np.cumsum(np.bincount(up_cols, minlength=N)))).astype(np.int64)
        self.N = N
        self.diag_pos = inv[:N]
        self.contrib_pos = inv[N : N + ci.shape[0]]
        self.contrib_src = src
        self.contrib_coef = coef
        self.const_data = np.zeros(self.nnz)
        np.add.at(self.const_data, inv[N + ci.shape[0] :], Ae.data)

        pattern = sp.csc_matrix((np.ones(self.nnz), self.up_rows, self.up_indptr), shape=(N, N))
        if self.method == "ldl":
            perm = _amd_order(pattern)
            pinv = np.empty_like(perm)
            pinv[perm] = np.arange(N)
            pr, pc = pinv[self.up_rows], pinv[up_cols]
            lo, hi = np.minimum(pr, pc), np.maximum(pr, pc)
            pkeys = hi * N + lo
            order = np.argsort(pkeys, kind="stable")
            self.perm = perm
            self.pinv = pinv
            self.p_map = order
            self.p_rows = np.ascontiguousarray(lo[order])
            self.p_indptr = np.concatenate(([0], np.cumsum(np.bincount(hi, minlength=N)))).astype(np.int64)
            self.ldl = _ck.LDL(self.p_indptr, self.p_rows, N)

    # -- numeric --------------------------------------------------------------

    def matrix_data(self, hdata: np.ndarray, eps: float, delta: float) -> np.ndarray:
        data = self.const_data.copy()
        data += np.bincount(self.contrib_pos, weights=self.contrib_coef * hdata[self.contrib_src], minlength=self.nnz)
        d = np.concatenate([self.P + eps, np.full(self.p, -delta)])
        np.add.at(data, self.diag_pos, d)
        return data

    def factor(self, scaling: NTScaling, eps: float = 1e-8, delta: float = 1e-8):
        self.scaling = scaling
        hdata = scaling.hinv_data()
        data = self.matrix_data(hdata, eps, delta)
        self.factor_count += 1
        if self.method == "ldl":
            signs = np.concatenate([np.ones(self.n), -np.ones(self.p)])[self.perm]
            self.ldl.factor(np.ascontiguousarray(data[self.p_map]), np.ascontiguousarray(signs), max(eps, delta))
        else:
            U = sp.csc_matrix((data, self.up_rows, self.up_indptr), shape=(self.N, self.N))
            K = (U + U.T - sp.diags(U.diagonal())).tocsc()
            self.lu = spla.splu(K, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0, options={"SymmetricMode": True})

    def _solve_reduced(self, rhs: np.ndarray) -> np.ndarray:
        if self.method == "ldl":
            out = np.empty_like(rhs)
            out[self.perm] = self.ldl.solve(np.ascontiguousarray(rhs[self.perm]))
            return out
        return self.lu.solve(rhs)

    def _hinv(self, v):
        W = self.scaling
        return W.apply_inv(W.apply_inv(v))

    def _h(self, v):
        W = self.scaling
        return W.apply(W.apply(v))

    def _solve_once(self, r_x, r_e, r_c):
        hr = self._hinv(r_c)
        rhs = np.concatenate([r_x + self.GT @ hr, r_e])
        sol = self._solve_reduced(rhs)
        dx = sol[: self.n]
        dz_e = sol[self.n :]
        dz_c = self._hinv(self.G @ dx - r_c)
        return dx, dz_e, dz_c

    def solve(self, r_x, r_e, r_c, refine: int = 6, rtol: float = 1e-13):
        dx, dz_e, dz_c = self._solve_once(r_x, r_e, r_c)
        scale = 1.0 + max(np.max(np.abs(r_x), initial=0), np.max(np.abs(r_e), initial=0), np.max(np.abs(r_c), initial=0))
        prev = np.inf
        for _ in range(refine):
            e_x = r_x - (self.P * dx + self.A_eT @ dz_e + self.GT @ dz_c)
            e_e = r_e - self.A_e @ dx
            e_c = r_c - (self.G @ dx - self._h(dz_c))
            err = max(np.max(np.abs(e_x), initial=0), np.max(np.abs(e_e), initial=0), np.max(np.abs(e_c), initial=0))
            # stop on convergence or once refinement stalls at round-off level
            if err <= rtol * scale or err > 0.5 * prev:
                break
            prev = err
            cx, ce, cc = self._solve_once(e_x, e_e, e_c)
            dx += cx
            dz_e += ce
            dz_c += cc
        return dx, dz_e, dz_c
