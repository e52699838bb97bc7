"""Exception hierarchy.

Input errors (bad files, missing fields) map to CLI exit code 2, everything
else under :class:`DomainError` maps to exit code 1.
"""


class PedSwerveError(Exception):
    """Base class for all package errors."""


class InputError(PedSwerveError, ValueError):
    """Unreadable, empty or malformed input data."""


class GroupingError(InputError):
    """Trajectories cannot be grouped into two-pedestrian encounters."""


class DomainError(PedSwerveError, ValueError):
    """A well-formed request that cannot be carried out."""


class InvalidConfigError(DomainError):
    pass


class InvalidInputError(DomainError):
    pass


class DegenerateTrajectoryError(DomainError):
    pass


class NoOverlapError(DomainError):
    pass


class DegenerateFitError(DomainError):
    def __init__(self, message, condition_estimate=float("inf")):
        super().__init__(message)
        self.condition_estimate = condition_estimate


class InvalidStateError(DomainError):
    pass


class FitFailureError(DomainError):
    def __init__(self, message, best_residual=float("inf")):
        super().__init__(message)
        self.best_residual = best_residual


class CausalityError(PedSwerveError, AssertionError):
    """A predictor asked for an observation that has not arrived yet."""
