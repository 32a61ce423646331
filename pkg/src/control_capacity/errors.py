"""Exception hierarchy shared by all modules."""


class CapacityError(Exception):
    """Base class for every error raised by this package."""


class ContractError(CapacityError, ValueError):
    """An input violates a documented precondition (shape, symmetry, sign)."""


class MagnitudeError(CapacityError, OverflowError):
    """A matrix exponential or Gramian overflowed to a non-finite value."""


class StabilityClassError(CapacityError):
    """The spectrum of A does not belong to the class an operation requires."""


class ConditioningError(CapacityError):
    """A linear system is too close to singular to solve reliably."""


class DegenerateNoiseError(CapacityError):
    """The output noise covariance is singular and cannot be regularized."""


class NegligibleModeError(CapacityError):
    """An operation was requested on a mode whose Gramian weight is negligible."""
