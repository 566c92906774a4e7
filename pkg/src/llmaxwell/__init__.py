"""Landau-Lifshitz-Maxwell micromagnetics on a masked Cartesian grid.

Steady states in the large-anisotropy regime, their limit problem, the
linearized spectrum and the time-dependent flow in angle variables.
"""

__version__ = "0.1.0"

from .config import RunConfig, load_config
from .domain import BoundaryData, DomainMask, GridSpec, build_torus_mask, make_boundary_data, winding_number
from .errors import (BracketError, ChartError, ConfigurationError, DataError, DivergedError, GeometryError,
                     LLMError, NonConvergenceError, ResolutionError, StepRejected)
from .field import AngleField, SolverParams
from .maxwell import solve_demag
from .steady import SteadyState, fixed_point, lambda_sweep, solve_limit

__all__ = [
    "RunConfig", "load_config", "BoundaryData", "DomainMask", "GridSpec", "build_torus_mask",
    "make_boundary_data", "winding_number", "BracketError", "ChartError", "ConfigurationError", "DataError",
    "DivergedError", "GeometryError", "LLMError", "NonConvergenceError", "ResolutionError", "StepRejected",
    "AngleField", "SolverParams", "solve_demag", "SteadyState", "fixed_point", "lambda_sweep", "solve_limit",
]
