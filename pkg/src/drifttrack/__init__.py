"""Optimal sequential tracking of a hidden two-state drift.

A two-state signal flips sign at exponential times and is observed only
through a Brownian motion whose drift it controls.  This package solves the
associated optimal switching problem (when should a tracker flip its guess?)
via a free-boundary characterisation, and verifies the solution by exact
filtering plus Monte Carlo policy evaluation.
"""

__version__ = "0.1.0"

from .model import (
    ModelParams,
    ParameterError,
    Regime,
    discounted_generator,
    never_switch_value,
    regime,
)
from .ode import DecreasingSolution, IntegrationFailure, InvariantViolation, solve_decreasing
from .boundary import (
    DegenerateDenominator,
    FitReport,
    FreeBoundary,
    NoRootBracket,
    ValueFunction,
    fit_mismatch,
    slope_fit_multiplier,
    solve_free_boundary,
    value_at,
    value_fit_multiplier,
    verify_fit,
)

__all__ = [
    "ModelParams",
    "ParameterError",
    "Regime",
    "discounted_generator",
    "never_switch_value",
    "regime",
    "DecreasingSolution",
    "IntegrationFailure",
    "InvariantViolation",
    "solve_decreasing",
    "DegenerateDenominator",
    "FitReport",
    "FreeBoundary",
    "NoRootBracket",
    "ValueFunction",
    "fit_mismatch",
    "slope_fit_multiplier",
    "solve_free_boundary",
    "value_at",
    "value_fit_multiplier",
    "verify_fit",
    "__version__",
]
