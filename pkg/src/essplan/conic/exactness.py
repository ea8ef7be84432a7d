"""Relaxation gap of rotated cones ``p^2 + q^2 <= l w``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .problem import ConicProblem


@dataclass
class ExactnessReport:
    residuals: np.ndarray
    tol: float

    @property
    def flagged(self) -> np.ndarray:
        """Indices of cones whose residual exceeds ``tol``."""
        return np.flatnonzero(self.residuals > self.tol)

    @property
    def tight(self) -> bool:
        return self.flagged.size == 0

    @property
    def max_residual(self) -> float:
        return float(np.max(self.residuals, initial=0.0))

    def describe(self) -> str:
        if self.tight:
            return f"relaxation tight (max residual {self.max_residual:.3e})"
        return f"relaxation not tight on {self.flagged.size} branch-hours (max residual {self.max_residual:.3e})"


def check_exactness(prob: ConicProblem, x: np.ndarray, tol: float = 1e-6) -> ExactnessReport:
    """Residuals ``l w - (p^2 + q^2)`` for every rotated cone of ``prob`` at ``x``."""
    if prob.rotated.shape[0] == 0:
        return ExactnessReport(np.zeros(0), tol)
    p, q, l, w = (x[prob.rotated[:, k]] for k in range(4))
    return ExactnessReport(l * w - (p * p + q * q), tol)
