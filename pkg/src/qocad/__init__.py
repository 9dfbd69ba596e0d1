"""Gradient-based quantum optimal control with reverse-mode differentiation."""

from .cost import CostReport, CostTerm
from .errors import ConfigurationError, DimensionError, OptimizationError, QocError
from .model import ControlHamiltonian, ControlProblem, PulseGrid, TimeGrid
from .optimize import OptimizationResult, OptimizerConfig, run
from .problems import build as build_problem

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "ControlHamiltonian",
    "ControlProblem",
    "CostReport",
    "CostTerm",
    "DimensionError",
    "OptimizationError",
    "OptimizationResult",
    "OptimizerConfig",
    "PulseGrid",
    "QocError",
    "TimeGrid",
    "build_problem",
    "run",
]
