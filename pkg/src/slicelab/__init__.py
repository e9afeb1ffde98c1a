"""slicelab: conservation laws and error budgets on foliated (1+1)-spacetimes.

A numerical laboratory for scalar conservation laws posed on a foliated
Lorentzian cylinder, in both the vector-field and differential-form
pictures, together with the machinery needed to evaluate a-priori error
budgets: companion-metric geodesic balls, admissible mollifier families,
a monotone finite-volume solver, and budget/bound estimators.
"""

from slicelab.errors import (
    ConfigError,
    DomainError,
    MeshMismatchError,
    NonHyperbolicError,
    NumericalError,
    SliceLabError,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DomainError",
    "MeshMismatchError",
    "NonHyperbolicError",
    "NumericalError",
    "SliceLabError",
    "__version__",
]
