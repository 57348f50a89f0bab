"""Exception hierarchy shared across the package."""


class CapshapeError(Exception):
    pass


class InvalidInputError(CapshapeError, ValueError):
    """An argument violates a documented precondition."""


class InfeasibleError(CapshapeError, ValueError):
    """The power constraint cannot be met by any PMF on the constellation."""


class BlockTooLargeError(CapshapeError, ValueError):
    """A block alphabet m**n exceeds the configured memory cap."""


class NotFullCodeError(CapshapeError, ValueError):
    """Codeword lengths do not satisfy the Kraft equality."""


class ConvergenceError(CapshapeError, RuntimeError):
    """An iterative solver stopped before meeting its tolerance.

    The best iterate and its residual are attached so callers can decide
    whether the result is still usable.
    """

    def __init__(self, message, best=None, residual=None):
        super().__init__(message)
        self.best = best
        self.residual = residual


class SearchSpaceTooLargeError(CapshapeError, ValueError):
    """Exhaustive enumeration requested beyond its supported bounds."""
