# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: sparse LDL' factorization and second-order cone arithmetic.

Pure NumPy/SciPy equivalents live in :mod:`essplan.conic.cones` and
:mod:`essplan.conic.kkt`; they are used when this module is not built.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, INFINITY

cnp.import_array()

ctypedef cnp.int64_t idx_t


cdef class LDL:
    """Up-looking LDL' of a quasi-definite matrix with a fixed pattern.

    The matrix is given by its upper triangle in CSC form (diagonal
    included).  Pivots whose sign disagrees with the expected one (or that
    are tiny) are replaced by ``sign * reg``; iterative refinement on the
    caller side absorbs the perturbation.
    """

    cdef public Py_ssize_t n
    cdef idx_t[::1] Ap, Ai, etree, Lnz, Lp, Li
    cdef double[::1] Lx, D, Dinv
    cdef public Py_ssize_t nnz_l, n_regularized

    def __init__(self, idx_t[::1] Ap, idx_t[::1] Ai, Py_ssize_t n):
        self.n = n
        self.Ap = Ap.copy()
        self.Ai = Ai.copy()
        self.etree = np.empty(n, dtype=np.int64)
        self.Lnz = np.zeros(n, dtype=np.int64)
        self._symbolic()
        self.Lp = np.zeros(n + 1, dtype=np.int64)
        cdef Py_ssize_t i
        for i in range(n):
            self.Lp[i + 1] = self.Lp[i] + self.Lnz[i]
        self.nnz_l = self.Lp[n]
        self.Li = np.zeros(self.nnz_l, dtype=np.int64)
        self.Lx = np.zeros(self.nnz_l)
        self.D = np.zeros(n)
        self.Dinv = np.zeros(n)
        self.n_regularized = 0

    cdef void _symbolic(self):
        cdef Py_ssize_t n = self.n, i, j, p
        cdef idx_t[::1] work = np.empty(n, dtype=np.int64)
        for i in range(n):
            work[i] = -1
            self.etree[i] = -1
            self.Lnz[i] = 0
        for j in range(n):
            work[j] = j
            for p in range(self.Ap[j], self.Ap[j + 1]):
                i = self.Ai[p]
                if i > j:
                    raise ValueError("LDL expects the upper triangle")
                while work[i] != j:
                    if self.etree[i] == -1:
                        self.etree[i] = j
                    self.Lnz[i] += 1
                    work[i] = j
                    i = self.etree[i]

    def factor(self, double[::1] Ax, double[::1] signs, double reg, double thresh=1e-13):
        cdef Py_ssize_t n = self.n, k, i, p, j, bidx, nxt, nnz_y, nnz_e, cidx, top
        cdef double yv
        cdef idx_t[::1] y_idx = np.empty(n, dtype=np.int64)
        cdef idx_t[::1] buf = np.empty(n, dtype=np.int64)
        cdef idx_t[::1] nxt_space = np.empty(n, dtype=np.int64)
        cdef cnp.uint8_t[::1] used = np.zeros(n, dtype=np.uint8)
        cdef double[::1] y = np.zeros(n)
        cdef idx_t[::1] Lp = self.Lp, Li = self.Li, etree = self.etree, Ap = self.Ap, Ai = self.Ai
        cdef double[::1] Lx = self.Lx, D = self.D, Dinv = self.Dinv
        self.n_regularized = 0
        for i in range(n):
            nxt_space[i] = Lp[i]
            D[i] = 0.0
        for k in range(n):
            nnz_y = 0
            for p in range(Ap[k], Ap[k + 1]):
                bidx = Ai[p]
                if bidx == k:
                    D[k] = Ax[p]
                    continue
                y[bidx] = Ax[p]
                if used[bidx] == 0:
                    used[bidx] = 1
                    buf[0] = bidx
                    nnz_e = 1
                    nxt = etree[bidx]
                    while nxt != -1 and nxt < k:
                        if used[nxt]:
                            break
                        used[nxt] = 1
                        buf[nnz_e] = nxt
                        nnz_e += 1
                        nxt = etree[nxt]
                    while nnz_e > 0:
                        nnz_e -= 1
                        y_idx[nnz_y] = buf[nnz_e]
                        nnz_y += 1
            for i in range(nnz_y - 1, -1, -1):
                cidx = y_idx[i]
                top = nxt_space[cidx]
                yv = y[cidx]
                for j in range(Lp[cidx], top):
                    y[Li[j]] -= Lx[j] * yv
                Li[top] = k
                Lx[top] = yv * Dinv[cidx]
                D[k] -= yv * Lx[top]
                nxt_space[cidx] += 1
                y[cidx] = 0.0
                used[cidx] = 0
            if D[k] * signs[k] <= thresh:
                D[k] = signs[k] * reg
                self.n_regularized += 1
            Dinv[k] = 1.0 / D[k]
        return self.n_regularized

    def solve(self, double[::1] b):
        cdef Py_ssize_t n = self.n, i, j
        cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.array(b, dtype=np.float64, copy=True)
        cdef double[::1] x = out
        cdef idx_t[::1] Lp = self.Lp, Li = self.Li
        cdef double[::1] Lx = self.Lx, Dinv = self.Dinv
        cdef double xi
        for i in range(n):
            xi = x[i]
            if xi != 0.0:
                for j in range(Lp[i], Lp[i + 1]):
                    x[Li[j]] -= Lx[j] * xi
        for i in range(n):
            x[i] *= Dinv[i]
        for i in range(n - 1, -1, -1):
            xi = x[i]
            for j in range(Lp[i], Lp[i + 1]):
                xi -= Lx[j] * x[Li[j]]
            x[i] = xi
        return out

    @property
    def diagonal(self):
        return np.asarray(self.D).copy()


# ---------------------------------------------------------------------------
# second-order cone kernels; layout [rays | cone_1 | cone_2 | ...]

def soc_jdiv(double[::1] lam, double[::1] d, Py_ssize_t nn, idx_t[::1] starts, idx_t[::1] dims):
    cdef Py_ssize_t i, k, st, m, K = dims.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] res = np.empty(d.shape[0])
    cdef double[::1] out = res
    cdef double l0, det, dot, x0
    for i in range(nn):
        out[i] = d[i] / lam[i]
    for k in range(K):
        st = starts[k]
        m = dims[k]
        l0 = lam[st]
        det = l0 * l0
        dot = l0 * d[st]
        for i in range(1, m):
            det -= lam[st + i] * lam[st + i]
            dot -= lam[st + i] * d[st + i]
        x0 = dot / det
        out[st] = x0
        for i in range(1, m):
            out[st + i] = (d[st + i] - x0 * lam[st + i]) / l0
    return res


def soc_max_step(double[::1] u, double[::1] du, Py_ssize_t nn, idx_t[::1] starts, idx_t[::1] dims):
    cdef Py_ssize_t i, k, st, m, K = dims.shape[0]
    cdef double alpha = INFINITY, a, b, c, disc, sq, q, r
    for i in range(nn):
        if du[i] < 0:
            r = -u[i] / du[i]
            if r < alpha:
                alpha = r
    for k in range(K):
        st = starts[k]
        m = dims[k]
        a = du[st] * du[st]
        b = u[st] * du[st]
        c = u[st] * u[st]
        for i in range(1, m):
            a -= du[st + i] * du[st + i]
            b -= u[st + i] * du[st + i]
            c -= u[st + i] * u[st + i]
        b *= 2.0
        if c < 0:
            c = 0.0
        if du[st] < 0:
            r = -u[st] / du[st]
            if r < alpha:
                alpha = r
        disc = b * b - 4.0 * a * c
        if disc >= 0:
            sq = sqrt(disc)
            q = -0.5 * (b + (sq if b >= 0 else -sq))
            if a != 0:
                r = q / a
                if r > 0 and r < alpha:
                    alpha = r
            if q != 0:
                r = c / q
                if r > 0 and r < alpha:
                    alpha = r
    if alpha > 1e30:
        alpha = 1e30
    return alpha


def nt_scaling(double[::1] s, double[::1] z, Py_ssize_t nn, idx_t[::1] starts, idx_t[::1] dims):
    """Return ``(w_nn, lam, eta, wbar)`` of the Nesterov-Todd scaling."""
    cdef Py_ssize_t i, k, st, m, K = dims.shape[0], dim = s.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] w_nn_a = np.empty(nn)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] lam_a = np.empty(dim)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] eta_a = np.empty(K)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] wbar_a = np.empty(dim - nn)
    cdef double[::1] w_nn = w_nn_a, lam = lam_a, eta = eta_a, wbar = wbar_a
    cdef double sn, zn, sz, gamma, et, w0, w1v1, v0, tmp
    for i in range(nn):
        w_nn[i] = sqrt(s[i] / z[i])
        lam[i] = sqrt(s[i] * z[i])
    for k in range(K):
        st = starts[k]
        m = dims[k]
        sn = s[st] * s[st]
        zn = z[st] * z[st]
        for i in range(1, m):
            sn -= s[st + i] * s[st + i]
            zn -= z[st + i] * z[st + i]
        sn = sqrt(sn if sn > 1e-300 else 1e-300)
        zn = sqrt(zn if zn > 1e-300 else 1e-300)
        sz = 0.0
        for i in range(m):
            sz += (s[st + i] / sn) * (z[st + i] / zn)
        tmp = (1.0 + sz) / 2.0
        gamma = sqrt(tmp if tmp > 1e-300 else 1e-300)
        wbar[st - nn] = (s[st] / sn + z[st] / zn) / (2.0 * gamma)
        for i in range(1, m):
            wbar[st - nn + i] = (s[st + i] / sn - z[st + i] / zn) / (2.0 * gamma)
        et = sqrt(sn / zn)
        eta[k] = et
        # lambda = W z
        w0 = wbar[st - nn]
        v0 = z[st]
        w1v1 = 0.0
        for i in range(1, m):
            w1v1 += wbar[st - nn + i] * z[st + i]
        lam[st] = et * (w0 * v0 + w1v1)
        for i in range(1, m):
            lam[st + i] = et * (v0 * wbar[st - nn + i] + z[st + i] + w1v1 / (1.0 + w0) * wbar[st - nn + i])
    return w_nn_a, lam_a, eta_a, wbar_a


def hinv_data(double[::1] w_nn, double[::1] wbar, double[::1] eta, Py_ssize_t nn, idx_t[::1] dims, Py_ssize_t size):
    """Entries of ``(W'W)^{-1}``: ray diagonals then row-major cone blocks."""
    cdef Py_ssize_t i, j, k, m, pos = nn, off = 0, K = dims.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] res = np.empty(size)
    cdef double[::1] out = res
    cdef double ie2, ji, jj
    for i in range(nn):
        out[i] = 1.0 / (w_nn[i] * w_nn[i])
    for k in range(K):
        m = dims[k]
        ie2 = 1.0 / (eta[k] * eta[k])
        for i in range(m):
            ji = wbar[off + i] if i == 0 else -wbar[off + i]
            for j in range(m):
                jj = wbar[off + j] if j == 0 else -wbar[off + j]
                out[pos + i * m + j] = ie2 * (2.0 * ji * jj + ((-1.0 if i == 0 else 1.0) if i == j else 0.0))
        pos += m * m
        off += m
    return res


def nt_apply(double[::1] w_nn, double[::1] wbar, double[::1] eta, double[::1] v, Py_ssize_t nn,
             idx_t[::1] starts, idx_t[::1] dims, bint inverse):
    """``W v`` (or ``W^{-1} v`` when ``inverse``) for the scaling of :func:`nt_scaling`."""
    cdef Py_ssize_t i, k, st, m, off, K = dims.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] res = np.empty(v.shape[0])
    cdef double[::1] out = res
    cdef double w0, v0, w1v1, et, sgn, coef
    sgn = -1.0 if inverse else 1.0
    for i in range(nn):
        out[i] = v[i] / w_nn[i] if inverse else v[i] * w_nn[i]
    for k in range(K):
        st = starts[k]
        m = dims[k]
        off = st - nn
        et = 1.0 / eta[k] if inverse else eta[k]
        w0 = wbar[off]
        v0 = v[st]
        w1v1 = 0.0
        for i in range(1, m):
            w1v1 += wbar[off + i] * v[st + i]
        out[st] = et * (w0 * v0 + sgn * w1v1)
        coef = w1v1 / (1.0 + w0) + sgn * v0
        for i in range(1, m):
            out[st + i] = et * (v[st + i] + coef * wbar[off + i])
    return res
