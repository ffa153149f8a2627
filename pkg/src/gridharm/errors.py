"""Exception types shared across the package."""


class GridharmError(Exception):
    """Base class for all package errors."""


class ValidationError(GridharmError):
    """Raised when an input document, array shape, or value is rejected."""


class NumericalError(GridharmError):
    """Raised when a computation cannot proceed for numerical reasons
    (singular systems, condition numbers past the invertibility threshold)."""
