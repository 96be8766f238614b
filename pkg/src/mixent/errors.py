"""Exception hierarchy shared by every mixent module."""

from __future__ import annotations


class MixentError(Exception):
    """Base class for all errors raised by mixent."""


class InputError(MixentError, ValueError):
    """Invalid argument or malformed model document."""


class UnsupportedError(MixentError):
    """The requested quantity is not available for this kind of density."""


class NumericsError(MixentError):
    """A numerical routine failed."""


class NonConvergenceError(NumericsError):
    """Adaptive routine exhausted its budget; ``best`` holds the last estimate."""

    def __init__(self, message: str, best=None):
        super().__init__(message)
        self.best = best


class PoisonedSampleError(NumericsError):
    """A Monte Carlo integrand returned NaN on a drawn sample."""

    def __init__(self, message: str, index: int):
        super().__init__(message)
        self.index = index


class InternalConsistencyError(NumericsError):
    """Two independent evaluation paths disagree beyond their error budget."""
