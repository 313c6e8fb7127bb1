"""Finite-difference simulation of a damped nonlinear suspension-bridge plate.

The plate occupies (0, pi) x (-d, d), is hinged on the short edges and free
on the long ones.  Damping combines a tempered fractional time derivative
and a viscoelastic memory term; a power-type source drives either decay or
finite-time amplitude escape.
"""

from .errors import (
    BridgePlateError,
    CflViolation,
    ConfigError,
    ConvergenceError,
    DimensionMismatch,
    InstabilityDetected,
    NotApplicable,
    SolverError,
)
from .grid import Grid, GridConfig, build_grid

__version__ = "0.1.0"

__all__ = [
    "BridgePlateError",
    "CflViolation",
    "ConfigError",
    "ConvergenceError",
    "DimensionMismatch",
    "InstabilityDetected",
    "NotApplicable",
    "SolverError",
    "Grid",
    "GridConfig",
    "build_grid",
]
