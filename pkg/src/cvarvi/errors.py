"""Exception types raised across the package."""


class CvarViError(Exception):
    """Base class for all package errors."""


class InvalidInputError(CvarViError, ValueError):
    """An argument violates a documented precondition."""


class InfeasibleSetError(CvarViError):
    """A polyhedral set has no feasible point."""


class UnsupportedOperationError(CvarViError):
    """The requested operation needs structure the object does not declare."""


class CostBoundsError(CvarViError):
    """A sampled cost fell outside the model's declared bounds."""


class DivergenceError(CvarViError):
    """An iterate became non-finite or exceeded the divergence threshold.

    The partial trace up to (and including) the offending iteration is kept
    on ``trace`` so callers can inspect what happened.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace
