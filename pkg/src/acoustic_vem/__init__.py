"""Lowest-order virtual element solver for the acoustic vibration eigenproblem on polygonal meshes."""
from .adapt import ConvergenceHistory, RunConfig, estimate_rate, extrapolate, run
from .eig import EigenPair, SolverConfig, solve_smallest_positive
from .estimator import local_indicators, mark_cells
from .generators import generate_mesh, get_domain
from .mesh import PolygonalMesh, build_mesh, refine_cells, uniform_refine
from .vem import assemble, build_dof_map

__version__ = "0.1.0"

__all__ = [
    "ConvergenceHistory",
    "EigenPair",
    "PolygonalMesh",
    "RunConfig",
    "SolverConfig",
    "assemble",
    "build_dof_map",
    "build_mesh",
    "estimate_rate",
    "extrapolate",
    "generate_mesh",
    "get_domain",
    "local_indicators",
    "mark_cells",
    "refine_cells",
    "run",
    "solve_smallest_positive",
    "uniform_refine",
]
