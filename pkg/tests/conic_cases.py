"""Random small conic programs shared by the kernel tests."""

import numpy as np
import scipy.sparse as sp

from essplan.conic import ConicProblem


def random_socp(seed: int, feasible: bool = True) -> ConicProblem:
    """Bounded SOCP built around a known interior point ``x0``.

    The infeasible variant asks for ``x_0 >= x0_0 + 5`` while capping it at
    ``x0_0 + 4``.
    """
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 12))
    meq = int(rng.integers(0, 3))
    min_ = int(rng.integers(0, 4))
    x0 = rng.normal(size=n)
    A_eq = sp.random(meq, n, density=0.6, random_state=seed, format="csr")
    A_in = sp.random(min_, n, density=0.6, random_state=seed + 1, format="csr")
    b_in = A_in @ x0 + rng.uniform(0, 1, min_)
    G = sp.random(7, n, density=0.5, random_state=seed + 2, format="csr")
    s0 = np.concatenate([[2 + abs(rng.normal())], rng.normal(size=2) * 0.5, [3], rng.normal(size=3) * 0.5])
    h = G @ x0 + s0
    lb = np.where(rng.random(n) < 0.5, x0 - rng.uniform(0.1, 1, n), -10.0)
    ub = np.where(rng.random(n) < 0.5, x0 + rng.uniform(0.1, 1, n), 10.0)
    P = np.where(rng.random(n) < 0.5, rng.uniform(0, 2, n), 0.0)
    c = rng.normal(size=n)
    if not feasible:
        lb[0] = x0[0] + 5
        ub[0] = x0[0] + 4
    return ConicProblem(P, c, A_eq, A_eq @ x0, A_in, b_in, lb, ub, G, h, [3, 4])
