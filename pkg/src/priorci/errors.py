"""Semantic exceptions, mapped to CLI exit codes by priorci.cli."""

__all__ = ["PriorCIError", "ConfigError", "DataError", "DegenerateFitError", "ConvergenceError"]


class PriorCIError(Exception):
    """Base error for this package."""


class ConfigError(PriorCIError):
    """Invalid or inconsistent configuration / file mismatch."""


class DataError(PriorCIError):
    """Input data violates the regression contract."""


class DegenerateFitError(DataError):
    """Perfect fit (sigma_hat = 0); intervals are undefined."""


class ConvergenceError(PriorCIError):
    """A numerical routine failed to converge."""
