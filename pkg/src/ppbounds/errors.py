"""Exception types shared across the package."""


class PPBoundsError(Exception):
    """Base class for all package errors."""


class ConfigurationError(PPBoundsError):
    """Invalid model, integrand, or experiment configuration."""


class DataError(PPBoundsError):
    """Input data inconsistent with the declared model (bad sample, bad stream)."""


class SizeError(PPBoundsError):
    """Problem too large for an exhaustive solver; use the approximate one."""


class DivergenceError(PPBoundsError):
    """A series was requested outside its convergence region."""


class DegeneratePathError(PPBoundsError):
    """A path functional hit a degenerate value (e.g. a vanishing exponential)."""
