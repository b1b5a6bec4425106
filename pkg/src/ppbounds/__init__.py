"""Concentration bounds for compensated point-process integrals: simulation,
exact characteristics, chaining functionals, and Monte Carlo verification."""

__version__ = "0.1.0"

from . import bernstein, chaining, empirical, exponential, harness, mle, point_process
from .errors import (
    ConfigurationError,
    DataError,
    DegeneratePathError,
    DivergenceError,
    PPBoundsError,
    SizeError,
)
from .seeding import derive_seed

__all__ = [
    "__version__",
    "point_process",
    "exponential",
    "bernstein",
    "chaining",
    "empirical",
    "mle",
    "harness",
    "derive_seed",
    "PPBoundsError",
    "ConfigurationError",
    "DataError",
    "SizeError",
    "DivergenceError",
    "DegeneratePathError",
]
