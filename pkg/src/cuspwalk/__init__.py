"""Random walks on cusped graphs of relatively hyperbolic groups."""
from .group_model import GroupModel, make_group
from .cusped_graph import CuspedGraph, Vertex, build_ball
from .walk_kernel import (InfeasibleParameters, WalkParams, WeightedChain, audit_templates,
                          check_params, solve_params, validate_params)
from .green_lab import GreenLab, nstep_distribution
from .asymptotics import (critical_exponent, estimate_drift, estimate_entropy,
                          fundamental_report, simulate_paths)
from .boundary_measures import BoundaryMeasures, ShadowSpec, boundary_sample
from .config import RunConfig
from .pipeline import Pipeline

__all__ = [
    "GroupModel", "make_group", "CuspedGraph", "Vertex", "build_ball",
    "InfeasibleParameters", "WalkParams", "WeightedChain", "audit_templates", "check_params",
    "solve_params", "validate_params", "GreenLab", "nstep_distribution",
    "critical_exponent", "estimate_drift", "estimate_entropy", "fundamental_report",
    "simulate_paths", "BoundaryMeasures", "ShadowSpec", "boundary_sample", "RunConfig",
    "Pipeline",
]
