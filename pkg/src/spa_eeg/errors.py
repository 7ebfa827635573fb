"""Exception hierarchy shared by all modules."""

import numpy as np


class SpaEegError(Exception):
    """Base class for all toolkit errors."""


class ShapeError(SpaEegError, ValueError):
    """Array has the wrong shape, or is not symmetric where required."""


class SingularMatrixError(SpaEegError, np.linalg.LinAlgError):
    """Matrix is singular or too ill-conditioned for the requested operation."""


class ParseError(SpaEegError, ValueError):
    """A file could not be decoded.

    ``offset`` is the byte position where decoding failed, when known.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ValidationError(SpaEegError, ValueError):
    """Input data violates a domain invariant."""


class DegenerateTrialError(SpaEegError, ValueError):
    """Trial has zero energy, so a normalized statistic is undefined."""


class InsufficientNeighborsError(SpaEegError, ValueError):
    """Too few points to fit a sphere of the requested dimension."""


class DegenerateFitError(SpaEegError, ValueError):
    """Local scatter is singular, so the sphere center is undefined."""


class ConvergenceError(SpaEegError, RuntimeError):
    """Iterative algorithm did not converge.

    ``residual`` holds the last residual norm.
    """

    def __init__(self, message, residual):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual


class FilterDesignError(SpaEegError, ValueError):
    """Filter specification cannot be realized."""
