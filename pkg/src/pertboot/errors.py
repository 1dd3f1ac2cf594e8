"""Exception hierarchy shared across the package."""

from __future__ import annotations


class PertbootError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(PertbootError, ValueError):
    """A constructor or operation received an out-of-range parameter."""


class SingularDesignError(PertbootError):
    """The design matrix (or a weighted version of it) is rank deficient."""


class NonConvergenceError(PertbootError):
    """Newton iteration failed; ``best`` carries the best iterate found."""

    def __init__(self, message: str, best=None, eq_norm: float = float("nan")):
        super().__init__(message)
        self.best = best
        self.eq_norm = eq_norm


class DegenerateStudentizationError(PertbootError):
    """A studentization factor or matrix is zero, negative, or singular."""


class ReplicateRejected(PertbootError):
    """A single bootstrap replicate could not be solved or studentized.

    Engines catch this and redraw the replicate's weights.
    """


class BootstrapFailure(PertbootError):
    """Too many replicates were rejected for the run to be meaningful."""


class UnsupportedModelError(PertbootError):
    """The operation is only defined for a narrower model class."""


class UnsupportedScoreError(UnsupportedModelError):
    """The engine only supports the least-squares score."""


class SchemeValidationError(PertbootError):
    """A weight sampler produced a negative draw."""
