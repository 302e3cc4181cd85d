class MinorforgeError(Exception):
    """Base class for library errors."""


class DegreeError(MinorforgeError, ValueError):
    """Degree or shape outside the supported range."""


class SingularInputError(MinorforgeError, ValueError):
    """An operation needed an invertible matrix."""


class AmbiguityError(MinorforgeError):
    """The +A / -A branch cannot be determined from the data supplied."""


class NotInImageError(MinorforgeError):
    """No matrix reproduces the given minors within tolerance."""


class ConvergenceError(MinorforgeError):
    """Iterative solve stopped without meeting its tolerance.

    ``best`` carries the best iterate found, ``residual`` its relative residual.
    """

    def __init__(self, message, best=None, residual=None):
        super().__init__(message)
        self.best = best
        self.residual = residual


class AmbiguousDimensionError(MinorforgeError):
    """No singular-value gap large enough to fix a kernel dimension."""


class MetricError(MinorforgeError, ValueError):
    """A metric sample is not symmetric positive definite."""

    def __init__(self, message, vertex=None):
        super().__init__(message)
        self.vertex = vertex
