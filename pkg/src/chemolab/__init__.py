"""Delayed chemostat and delayed logistic equations: simulation and analysis."""

from .analysis import classify, critical_delay, equilibria, leading_root, linearize
from .dde import DelayEquation, History, SolverOptions, Trajectory, integrate
from .models import Model, nondimensionalize, to_wright
from .verification import asymptotic_state

__version__ = "0.1.0"

__all__ = [
    "DelayEquation",
    "History",
    "Model",
    "SolverOptions",
    "Trajectory",
    "asymptotic_state",
    "classify",
    "critical_delay",
    "equilibria",
    "integrate",
    "leading_root",
    "linearize",
    "nondimensionalize",
    "to_wright",
]
