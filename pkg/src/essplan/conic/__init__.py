"""Second-order cone programming kernel."""

from .cones import BACKEND, use_backend
from .exactness import ExactnessReport, check_exactness
from .ipm import (
    INFEASIBLE, NUMERICAL, OPTIMAL, UNBOUNDED, ContinuousSolution, Tolerances, kkt_residuals, solve_conic,
)
from .problem import ConicProblem, Multipliers, cone_violation, presolve, verify_certificate

__all__ = [
    "BACKEND", "use_backend", "ExactnessReport", "check_exactness", "INFEASIBLE", "NUMERICAL", "OPTIMAL",
    "UNBOUNDED", "ContinuousSolution", "Tolerances", "kkt_residuals", "solve_conic", "ConicProblem",
    "Multipliers", "cone_violation", "presolve", "verify_certificate",
]
