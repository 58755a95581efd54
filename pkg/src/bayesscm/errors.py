"""Exception types shared across the package.

All errors raised by bayesscm derive from :class:`BayesSCMError`, so callers
can catch one base class at an API boundary. The CLI maps subclasses onto
exit codes (see :mod:`bayesscm.cli`).
"""

from __future__ import annotations

__all__ = [
    "BayesSCMError",
    "ValidationError",
    "NotFoundError",
    "SchemaError",
    "DimensionError",
    "NumericError",
    "RankError",
    "IterationLimitError",
    "ConfigError",
    "DomainError",
    "DegenerateError",
    "SimulationError",
    "ConvergenceWarning",
]


class BayesSCMError(Exception):
    """Base class for all package errors."""


class ValidationError(BayesSCMError):
    """Input data fails a structural or numeric requirement."""


class NotFoundError(BayesSCMError):
    """A requested identifier (unit, file, column) does not exist."""


class SchemaError(BayesSCMError):
    """A file or table does not match the documented schema."""


class DimensionError(BayesSCMError):
    """Array shapes are inconsistent with each other or with the design."""


class NumericError(BayesSCMError):
    """Non-finite values, negative weights, or a numerically hopeless system."""


class RankError(BayesSCMError):
    """An exactly singular linear system where a unique solution is required.

    Carries ``nullity``, the dimension of the offending null space.
    """

    def __init__(self, message: str, nullity: int = 0):
        super().__init__(message)
        self.nullity = int(nullity)


class IterationLimitError(BayesSCMError):
    """An iterative solver exhausted its iteration budget."""


class ConfigError(BayesSCMError):
    """Invalid tuning or configuration values (grids, folds, options)."""


class DomainError(BayesSCMError):
    """A parameter lies outside the mathematical domain of an operation."""


class DegenerateError(BayesSCMError):
    """A statistically degenerate outcome, e.g. an empty donor pool."""


class SimulationError(BayesSCMError):
    """The simulation harness exceeded its tolerated failure rate."""


class ConvergenceWarning(UserWarning):
    """An iterative fit stopped at its cap without meeting its tolerance."""
