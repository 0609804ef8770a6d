"""Exception types shared across the package."""


class InvalidDimensionError(ValueError):
    """Local dimension is too small or not a positive integer."""


class InvalidCoefficientError(ValueError):
    """State coefficients are negative, unnormalized, or out of range."""


class InvalidParameterError(ValueError):
    """A numeric parameter is outside its admissible range."""


class ShapeError(ValueError):
    """Array arguments have inconsistent shapes or index sets."""


class SingularRatioError(ValueError):
    """A probability ratio needed for an operator coefficient is undefined."""


class ResourceLimitError(RuntimeError):
    """A configured size cap (vertex count, tensor dimension) was exceeded."""


class ConvergenceError(RuntimeError):
    """An iterative solver stopped before reaching its tolerance.

    Carries the best iterate found so far in ``best`` when available.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best
