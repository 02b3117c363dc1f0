"""Steady state of the boundary-driven harmonic process.

Exact rational closed forms, the matrix product and mixture
representations, and a Gillespie simulator to check them against.
"""
from .errors import (
    AccuracyError,
    ConfigurationError,
    ConvergenceError,
    DegenerateEquilibriumError,
    DomainError,
    TruncationError,
)
from .exactnum import h_weight, kappa, phi_rate
from .steady_closed import BoundaryParams, SteadyVector, mu_component, mu_table, nu_component, nu_table

__version__ = "0.1.0"

__all__ = [
    "AccuracyError",
    "BoundaryParams",
    "ConfigurationError",
    "ConvergenceError",
    "DegenerateEquilibriumError",
    "DomainError",
    "SteadyVector",
    "TruncationError",
    "h_weight",
    "kappa",
    "mu_component",
    "mu_table",
    "nu_component",
    "nu_table",
    "phi_rate",
]
