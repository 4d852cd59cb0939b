"""Exception types shared across the package."""


class CfrlError(Exception):
    """Base class for errors raised by this package."""


class InvalidActionError(CfrlError, ValueError):
    """Raised when a policy emits a non-finite acceleration."""


class EmptyPeriodError(CfrlError, ValueError):
    """Raised when a car-following period is too short to simulate."""


class MalformedLogError(CfrlError, ValueError):
    """Raised when a raw trajectory log violates basic ordering rules."""


class InsufficientDataError(CfrlError, ValueError):
    """Raised when a dataset is too small for the requested operation."""


class ClusteringDegenerateError(CfrlError, ValueError):
    """Raised when driver features are identical and cannot be clustered."""


class InvalidObservationError(CfrlError, ValueError):
    """Raised when a reward is requested against a non-positive observation."""


class CollisionStateError(CfrlError, ValueError):
    """Raised when a car-following model is queried at non-positive spacing."""


class DivergenceError(CfrlError, ArithmeticError):
    """Raised when training produces non-finite losses or gradients."""
