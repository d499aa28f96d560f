"""Numerical verification of exact Lagrangians in model Weinstein domains.

Builds the surgery Lagrangians in the disc with a cylindrical handle and the
disc-mutation Lagrangian in a cotangent bundle with a critical handle, then
certifies exactness, gluing and Maslov indices numerically.
"""

from handlemaslov.errors import (
    ConstructionError,
    GluingError,
    NonConvergenceError,
    NumericError,
    ParameterError,
    RefinementNeeded,
    SearchError,
    UnsupportedPointError,
)

__version__ = "0.1.0"

__all__ = [
    "ConstructionError",
    "GluingError",
    "NonConvergenceError",
    "NumericError",
    "ParameterError",
    "RefinementNeeded",
    "SearchError",
    "UnsupportedPointError",
]
