"""MILP models of the planning problem and the solver interface."""

from .backends import BackendUnavailable, SolverConfig, SolverError, available_backends
from .formulations import (
    InfeasibleModelError,
    PlanSolution,
    build_fosva,
    build_multistage,
    build_safety_stock,
    build_two_stage,
    compute_ss_levels,
    solve,
)
from .model import MilpModel

__all__ = [
    "BackendUnavailable",
    "InfeasibleModelError",
    "MilpModel",
    "PlanSolution",
    "SolverConfig",
    "SolverError",
    "available_backends",
    "build_fosva",
    "build_multistage",
    "build_safety_stock",
    "build_two_stage",
    "compute_ss_levels",
    "solve",
]
