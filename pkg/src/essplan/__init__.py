"""Energy storage sizing and siting on radial distribution feeders.

The planning problem is a mixed-integer second-order cone program built on
the branch flow (DistFlow) model; it is solved by an embedded interior-point
kernel inside a branch-and-bound driver.
"""

from .analysis import PlanResult, StressConfig, solve_plan, stress_sweep
from .bnb import MipOptions, MipSolution, brute_force, solve_miqcp
from .conic import BACKEND, ConicProblem, Tolerances, check_exactness, solve_conic
from .model import BuildOptions, PlanningModel, build
from .network import CaseError, NetworkCase, load_case, validate_radial
from .scenario import ScenarioSet, load_scenarios, normalize_weights, stress_load

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "BuildOptions", "CaseError", "ConicProblem", "MipOptions", "MipSolution", "NetworkCase",
    "PlanResult", "PlanningModel", "ScenarioSet", "StressConfig", "Tolerances", "brute_force", "build",
    "check_exactness", "load_case", "load_scenarios", "normalize_weights", "solve_conic", "solve_miqcp",
    "solve_plan", "stress_load", "stress_sweep", "validate_radial",
]
