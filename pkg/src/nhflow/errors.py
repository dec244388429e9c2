"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class NhflowError(Exception):
    """Base class for library errors."""


class DomainError(NhflowError, ValueError):
    """Parameters or data outside the region where a formula is valid."""


class EvaluationError(DomainError):
    """A function produced a non-finite value at some grid node."""


class DegeneracyError(DomainError):
    """A metric coefficient or denominator vanishes on the grid."""


class ConfigError(NhflowError, ValueError):
    """Malformed or inconsistent run configuration."""


class ConvergenceError(NhflowError, RuntimeError):
    """An iterative solver failed to reach its tolerance."""

    def __init__(self, message: str, history: list[float] | None = None):
        super().__init__(message)
        self.history = list(history or [])
