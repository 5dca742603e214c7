"""Exception types shared across the package."""


class IfelabError(Exception):
    """Base class for all package errors."""


class InvalidConfigError(IfelabError):
    """A configuration value is out of its admissible range."""


class GeometricDegeneracyError(IfelabError):
    """The interface passes through (or too close to) a mesh vertex."""


class AssumptionViolationError(IfelabError):
    """The interface does not cut an element on exactly two distinct edges."""


class NoIntersectionError(IfelabError):
    """Intersection requested on a segment without a sign change."""


class DegenerateRegionError(IfelabError):
    """A quadrature region has (numerically) vanishing measure."""


class LocalDegeneracyError(IfelabError):
    """A local interface-element system lost positive definiteness."""


class NotSPDError(IfelabError):
    """Factorization of a matrix expected to be SPD broke down."""

    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot


class EstimationFailureError(IfelabError):
    """Eigenvalue estimation did not converge; carries best bounds."""

    def __init__(self, message, best_bounds=None):
        super().__init__(message)
        self.best_bounds = best_bounds


class ScalingError(IfelabError):
    """Diagonal scaling requested with nonpositive diagonal entries."""


class UndefinedIndicatorError(IfelabError):
    """The round-off indicator is undefined (zero reference norm)."""


class UnsupportedConfigurationError(IfelabError):
    """A geometric configuration outside the supported regime."""


class InternalConsistencyError(IfelabError):
    """Mismatch between data structures that should agree."""
