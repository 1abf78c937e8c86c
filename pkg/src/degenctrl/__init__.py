"""Boundary null-controls for 1-D degenerate/singular heat equations by the moment method."""

from .errors import (
    BracketError,
    CriticalPotentialError,
    DomainError,
    DuplicateExponent,
    IllConditioned,
)
from .spectrum import ProblemParams, derive_params, eigen_system

__version__ = "0.1.0"

__all__ = [
    "BracketError",
    "CriticalPotentialError",
    "DomainError",
    "DuplicateExponent",
    "IllConditioned",
    "ProblemParams",
    "derive_params",
    "eigen_system",
]
