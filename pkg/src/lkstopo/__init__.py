"""Topology optimisation of moving rigid bodies in incompressible flow.

The flow is solved with a lattice kinetic scheme on a fixed analysis grid,
the design lives on a second grid attached to the moving body and the two
are coupled through a smooth overlap kernel.  Sensitivities come from the
exact discrete adjoint of the time-stepping and the design is updated with
the method of moving asymptotes.
"""

from .config import CaseConfig, ConfigError, describe, load_config, parse_config
from .design import BrinkmanParams, DesignField
from .forward import FlowProblem, SolverDivergence, run_forward
from .adjoint import run_adjoint
from .gallery import Case, build_case, load_case, shipped_cases
from .lattice import FlowState, UniformGrid
from .mma import MmaState, mma_update
from .optimize import LoopControl, OptimizationAborted, optimization_loop

__version__ = "0.1.0"

__all__ = [
    "BrinkmanParams",
    "Case",
    "CaseConfig",
    "ConfigError",
    "DesignField",
    "FlowProblem",
    "FlowState",
    "LoopControl",
    "MmaState",
    "OptimizationAborted",
    "SolverDivergence",
    "UniformGrid",
    "build_case",
    "describe",
    "load_case",
    "load_config",
    "mma_update",
    "optimization_loop",
    "parse_config",
    "run_adjoint",
    "run_forward",
    "shipped_cases",
]
