"""Plain-text interchange format for conic programs.

A dump is one JSON document::

    {
      "format": "essplan-conic",
      "version": 1,
      "n": <number of columns>,
      "columns": ["pG[0,t=1,w=winter-clear]", ...],       # optional names
      "objective": {"quad": [[j, P_j], ...],              # 1/2 P_j x_j^2
                    "linear": [[j, c_j], ...], "constant": c0},
      "bounds": {"lb": [...], "ub": [...]},               # null = unbounded
      "equalities":   [{"coefs": [[j, a], ...], "rhs": b}, ...],
      "inequalities": [{"coefs": [[j, a], ...], "rhs": b}, ...],   # a'x <= b
      "cones": [{"dim": d, "rows": [{"coefs": [[j, g], ...], "h": h}, ...]}],
      "rotated": [[p, q, l, w], ...],                     # p^2 + q^2 <= l w
      "binaries": [j, ...]
    }

Cone ``k`` requires ``h - G x`` to lie in the second-order cone of dimension
``dim`` (first entry bounds the norm of the rest).  Linear rows and cones are
stored in the model's canonical order.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .conic.problem import ConicProblem

FORMAT = "essplan-conic"
VERSION = 1


def _sparse_rows(A: sp.csr_matrix, rhs: np.ndarray) -> list:
    A = A.tocsr()
    out = []
    for r in range(A.shape[0]):
        lo, hi = A.indptr[r], A.indptr[r + 1]
        out.append({"coefs": [[int(j), float(v)] for j, v in zip(A.indices[lo:hi], A.data[lo:hi])],
                    "rhs": float(rhs[r])})
    return out


def _bound(v):
    return None if not np.isfinite(v) else float(v)


def to_document(prob: ConicProblem, binaries=(), names=None) -> dict:
    G = prob.G.tocsr()
    cones, start = [], 0
    for d in prob.soc_dims:
        rows = []
        for r in range(start, start + int(d)):
            lo, hi = G.indptr[r], G.indptr[r + 1]
            rows.append({"coefs": [[int(j), float(v)] for j, v in zip(G.indices[lo:hi], G.data[lo:hi])],
                         "h": float(prob.h[r])})
        cones.append({"dim": int(d), "rows": rows})
        start += int(d)
    doc = {
        "format": FORMAT,
        "version": VERSION,
        "n": prob.n,
        "objective": {
            "quad": [[int(j), float(prob.P[j])] for j in np.flatnonzero(prob.P)],
            "linear": [[int(j), float(prob.c[j])] for j in np.flatnonzero(prob.c)],
            "constant": float(prob.c0),
        },
        "bounds": {"lb": [_bound(v) for v in prob.lb], "ub": [_bound(v) for v in prob.ub]},
        "equalities": _sparse_rows(prob.A_eq, prob.b_eq),
        "inequalities": _sparse_rows(prob.A_in, prob.b_in),
        "cones": cones,
        "rotated": prob.rotated.tolist(),
        "binaries": [int(j) for j in binaries],
    }
    if names is not None:
        doc["columns"] = list(names)
    return doc


def _matrix(rows: list, n: int, key: str):
    ri, ci, vals, rhs = [], [], [], []
    for r, row in enumerate(rows):
        for j, v in row["coefs"]:
            ri.append(r)
            ci.append(j)
            vals.append(v)
        rhs.append(row[key])
    A = sp.csr_matrix((vals, (ri, ci)), shape=(len(rows), n))
    return A, np.array(rhs, dtype=float)


def from_document(doc: dict) -> tuple[ConicProblem, np.ndarray]:
    if doc.get("format") != FORMAT or doc.get("version") != VERSION:
        raise ValueError(f"not an {FORMAT} v{VERSION} document")
    n = int(doc["n"])
    P = np.zeros(n)
    c = np.zeros(n)
    for j, v in doc["objective"]["quad"]:
        P[j] = v
    for j, v in doc["objective"]["linear"]:
        c[j] = v
    lb = np.array([-np.inf if v is None else v for v in doc["bounds"]["lb"]], dtype=float)
    ub = np.array([np.inf if v is None else v for v in doc["bounds"]["ub"]], dtype=float)
    A_eq, b_eq = _matrix(doc["equalities"], n, "rhs")
    A_in, b_in = _matrix(doc["inequalities"], n, "rhs")
    cone_rows = [row for cone in doc["cones"] for row in cone["rows"]]
    G, h = _matrix(cone_rows, n, "h")
    prob = ConicProblem(P, c, A_eq, b_eq, A_in, b_in, lb, ub, G, h,
                        np.array([cone["dim"] for cone in doc["cones"]], dtype=np.int64),
                        float(doc["objective"]["constant"]), np.array(doc["rotated"], dtype=np.int64))
    return prob, np.array(doc["binaries"], dtype=np.int64)


def column_names(model) -> list[str]:
    vs = model.vs
    ids = [s.id for s in model.scenarios.scenarios]
    out = []
    for j in range(vs.n):
        kind, el, t, w = vs.label(j)
        out.append(f"{kind}[{el}]" if t is None else f"{kind}[{el},t={t + 1},w={ids[w]}]")
    return out


def write_model(model, path) -> None:
    """Dump a :class:`~essplan.model.PlanningModel` with column names."""
    doc = to_document(model.problem, model.binaries, column_names(model))
    Path(path).write_text(json.dumps(doc, separators=(",", ":")) + "\n")


def read_model(path) -> tuple[ConicProblem, np.ndarray]:
    return from_document(json.loads(Path(path).read_text()))
