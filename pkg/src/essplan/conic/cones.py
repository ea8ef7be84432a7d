"""Symmetric-cone arithmetic for the interior-point kernel.

Vectors are laid out as ``[nonnegative part | second-order cones]``.  Cones of
equal dimension are processed together through an index matrix, so every
operation below is a handful of vectorized NumPy calls.  :mod:`essplan._kernels`
provides compiled versions of the same routines; :data:`BACKEND` tells which
one is active.
"""

from __future__ import annotations

import numpy as np

try:  # pragma: no cover - exercised through BACKEND
    from essplan import _kernels as _ck
except ImportError:  # pragma: no cover
    _ck = None

BACKEND = "compiled" if _ck is not None else "numpy"


def use_backend(name: str) -> str:
    """Switch between ``"compiled"`` and ``"numpy"``; returns the previous one."""
    global BACKEND
    prev = BACKEND
    if name == "compiled" and _ck is None:
        raise RuntimeError("compiled kernels are not available in this build")
    if name not in ("compiled", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    BACKEND = name
    return prev


class ConeSpec:
    """Layout of a product of ``nn`` nonnegative rays and second-order cones."""

    def __init__(self, nn: int, soc_dims):
        self.nn = int(nn)
        self.soc_dims = np.asarray(soc_dims, dtype=np.int64)
        self.dim = self.nn + int(self.soc_dims.sum())
        self.degree = self.nn + self.soc_dims.shape[0]
        starts = self.nn + (np.cumsum(self.soc_dims) - self.soc_dims).astype(np.int64)
        self.soc_starts = starts
        sq = self.soc_dims**2
        self.block_offsets = self.nn + (np.cumsum(sq) - sq).astype(np.int64)
        self.hdata_size = self.nn + int(sq.sum())
        self.groups = []
        self.group_cones = []
        for d in np.unique(self.soc_dims):
            ids = np.flatnonzero(self.soc_dims == d)
            self.group_cones.append(ids)
            self.groups.append(starts[ids][:, None] + np.arange(d)[None, :])
        self.identity = np.zeros(self.dim)
        self.identity[: self.nn] = 1.0
        self.identity[starts] = 1.0
        # flattened description for the compiled kernels
        self.c_starts = np.ascontiguousarray(starts)
        self.c_dims = np.ascontiguousarray(self.soc_dims)

    # -- elementary operations ------------------------------------------------

    def jdot(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Jordan product ``u o v``."""
        out = np.empty_like(u)
        nn = self.nn
        out[:nn] = u[:nn] * v[:nn]
        for idx in self.groups:
            U, V = u[idx], v[idx]
            out[idx[:, 0]] = np.einsum("ij,ij->i", U, V)
            out[idx[:, 1:]] = U[:, :1] * V[:, 1:] + V[:, :1] * U[:, 1:]
        return out

    def jdiv(self, lam: np.ndarray, d: np.ndarray) -> np.ndarray:
        """Solve ``lam o x = d`` for ``x`` (``lam`` in the cone interior)."""
        if BACKEND == "compiled":
            return _ck.soc_jdiv(lam, d, self.nn, self.c_starts, self.c_dims)
        out = np.empty_like(d)
        nn = self.nn
        out[:nn] = d[:nn] / lam[:nn]
        for idx in self.groups:
            L, D = lam[idx], d[idx]
            l0, l1 = L[:, 0], L[:, 1:]
            det = l0 * l0 - np.einsum("ij,ij->i", l1, l1)
            x0 = (l0 * D[:, 0] - np.einsum("ij,ij->i", l1, D[:, 1:])) / det
            out[idx[:, 0]] = x0
            out[idx[:, 1:]] = (D[:, 1:] - x0[:, None] * l1) / l0[:, None]
        return out

    def max_step(self, u: np.ndarray, du: np.ndarray) -> float:
        """Largest ``a`` (capped at 1e30) with ``u + a du`` in the cone."""
        if BACKEND == "compiled":
            return _ck.soc_max_step(u, du, self.nn, self.c_starts, self.c_dims)
        nn = self.nn
        alpha = np.inf
        neg = du[:nn] < 0
        if neg.any():
            alpha = float(np.min(-u[:nn][neg] / du[:nn][neg]))
        for idx in self.groups:
            U, D = u[idx], du[idx]
            alpha = min(alpha, _soc_step(U, D))
        return min(alpha, 1e30)

    def interior_shift(self, u: np.ndarray) -> np.ndarray:
        """Shift ``u`` along the identity so that it lies in the interior."""
        worst = -np.inf
        if self.nn:
            worst = max(worst, float(np.max(-u[: self.nn])))
        for idx in self.groups:
            U = u[idx]
            worst = max(worst, float(np.max(np.linalg.norm(U[:, 1:], axis=1) - U[:, 0])))
        if worst < 0:
            return u.copy()
        return u + (1.0 + worst) * self.identity

    def residual_in_cone(self, u: np.ndarray) -> float:
        """Worst violation ``max(-min(u_nn), ||u_1|| - u_0)``; negative means interior."""
        worst = -np.inf
        if self.nn:
            worst = max(worst, float(np.max(-u[: self.nn])))
        for idx in self.groups:
            U = u[idx]
            worst = max(worst, float(np.max(np.linalg.norm(U[:, 1:], axis=1) - U[:, 0])))
        return worst

    # -- Nesterov-Todd scaling -------------------------------------------------

    def nt_scaling(self, s: np.ndarray, z: np.ndarray) -> "NTScaling":
        if BACKEND == "compiled":
            w_nn, lam, eta, wbar = _ck.nt_scaling(s, z, self.nn, self.c_starts, self.c_dims)
            return NTScaling(self, w_nn, lam, eta, wbar)
        nn = self.nn
        w_nn = np.sqrt(s[:nn] / z[:nn])
        lam = np.empty_like(s)
        lam[:nn] = np.sqrt(s[:nn] * z[:nn])
        eta = np.empty(self.soc_dims.shape[0])
        wbar = np.empty(self.dim - nn)
        for idx, cone_ids in zip(self.groups, self.group_cones):
            S, Z = s[idx], z[idx]
            sn = np.sqrt(np.maximum(S[:, 0] ** 2 - np.einsum("ij,ij->i", S[:, 1:], S[:, 1:]), 1e-300))
            zn = np.sqrt(np.maximum(Z[:, 0] ** 2 - np.einsum("ij,ij->i", Z[:, 1:], Z[:, 1:]), 1e-300))
            Sb = S / sn[:, None]
            Zb = Z / zn[:, None]
            gamma = np.sqrt(np.maximum((1.0 + np.einsum("ij,ij->i", Sb, Zb)) / 2.0, 1e-300))
            Wb = np.empty_like(Sb)
            Wb[:, 0] = (Sb[:, 0] + Zb[:, 0]) / (2 * gamma)
            Wb[:, 1:] = (Sb[:, 1:] - Zb[:, 1:]) / (2 * gamma[:, None])
            et = np.sqrt(sn / zn)
            # lambda = W z computed from the scaled quantities
            lam_g = _w_apply(Wb, et, Z)
            lam[idx] = lam_g
            eta[cone_ids] = et
            wbar[idx - nn] = Wb
        return NTScaling(self, w_nn, lam, eta, wbar)


def _w_apply(Wb, eta, V):
    w0, w1 = Wb[:, 0], Wb[:, 1:]
    v0, v1 = V[:, 0], V[:, 1:]
    w1v1 = np.einsum("ij,ij->i", w1, v1)
    out = np.empty_like(V)
    out[:, 0] = w0 * v0 + w1v1
    out[:, 1:] = v0[:, None] * w1 + v1 + (w1v1 / (1.0 + w0))[:, None] * w1
    return eta[:, None] * out


def _w_inv_apply(Wb, eta, V):
    w0, w1 = Wb[:, 0], Wb[:, 1:]
    v0, v1 = V[:, 0], V[:, 1:]
    w1v1 = np.einsum("ij,ij->i", w1, v1)
    out = np.empty_like(V)
    out[:, 0] = w0 * v0 - w1v1
    out[:, 1:] = -v0[:, None] * w1 + v1 + (w1v1 / (1.0 + w0))[:, None] * w1
    return out / eta[:, None]


def _soc_step(U, D) -> float:
    u0, u1 = U[:, 0], U[:, 1:]
    d0, d1 = D[:, 0], D[:, 1:]
    a = d0 * d0 - np.einsum("ij,ij->i", d1, d1)
    b = 2.0 * (u0 * d0 - np.einsum("ij,ij->i", u1, d1))
    c = np.maximum(u0 * u0 - np.einsum("ij,ij->i", u1, u1), 0.0)
    alpha = np.full(u0.shape, np.inf)
    # the head must stay nonnegative
    neg = d0 < 0
    alpha[neg] = -u0[neg] / d0[neg]
    # roots of a t^2 + b t + c; the smallest positive one limits the step
    disc = b * b - 4 * a * c
    with np.errstate(divide="ignore", invalid="ignore"):
        sq = np.sqrt(np.maximum(disc, 0.0))
        q = -0.5 * (b + np.copysign(sq, b))
        r1 = np.where(a != 0, q / a, np.inf)
        r2 = np.where(q != 0, c / q, np.inf)
    for r in (r1, r2):
        ok = (disc >= 0) & (r > 0) & np.isfinite(r)
        alpha = np.where(ok, np.minimum(alpha, r), alpha)
    return float(np.min(alpha)) if alpha.size else np.inf


class NTScaling:
    """Nesterov-Todd scaling point ``W`` with ``W z = W^{-1} s = lambda``."""

    def __init__(self, spec: ConeSpec, w_nn, lam, eta, wbar):
        self.spec = spec
        self.w_nn = w_nn
        self.lam = lam
        self.eta = eta
        self.wbar = wbar
        self._cache = None

    def _groups(self):
        if self._cache is None:
            nn = self.spec.nn
            self._cache = [(idx, self.wbar[idx - nn], self.eta[cone_ids], cone_ids)
                           for idx, cone_ids in zip(self.spec.groups, self.spec.group_cones)]
        return self._cache

    def _apply(self, v: np.ndarray, inverse: bool) -> np.ndarray:
        spec = self.spec
        if BACKEND == "compiled":
            return _ck.nt_apply(self.w_nn, self.wbar, self.eta, v, spec.nn, spec.c_starts, spec.c_dims, inverse)
        nn = spec.nn
        out = np.empty_like(v)
        out[:nn] = v[:nn] / self.w_nn if inverse else self.w_nn * v[:nn]
        fn = _w_inv_apply if inverse else _w_apply
        for idx, Wb, et, _ in self._groups():
            out[idx] = fn(Wb, et, v[idx])
        return out

    def apply(self, v: np.ndarray) -> np.ndarray:
        """``W v``."""
        return self._apply(v, False)

    def apply_inv(self, v: np.ndarray) -> np.ndarray:
        """``W^{-1} v``."""
        return self._apply(v, True)

    def hinv_data(self) -> np.ndarray:
        """Entries of ``(W'W)^{-1}`` in the flat block layout.

        Rays contribute one diagonal entry each, a cone of dimension d a
        row-major d x d block starting at ``spec.block_offsets[k]``.
        """
        spec = self.spec
        if BACKEND == "compiled":
            return _ck.hinv_data(self.w_nn, self.wbar, self.eta, spec.nn, spec.c_dims, spec.hdata_size)
        out = np.empty(spec.hdata_size)
        out[: spec.nn] = self.w_nn**-2
        for idx, Wb, et, cone_ids in self._groups():
            d = Wb.shape[1]
            JW = Wb.copy()
            JW[:, 1:] *= -1.0
            B = 2.0 * JW[:, :, None] * JW[:, None, :]
            B[:, 0, 0] -= 1.0
            ar = np.arange(1, d)
            B[:, ar, ar] += 1.0
            B /= (et**2)[:, None, None]
            pos = spec.block_offsets[cone_ids][:, None] + np.arange(d * d)[None, :]
            out[pos] = B.reshape(-1, d * d)
        return out
