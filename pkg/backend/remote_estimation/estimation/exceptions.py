class EstimationError(Exception):
    """Base class for solver, simulator and policy failures."""


class ForbiddenActionError(EstimationError):
    """A transmission was requested in a channel state whose action mask forbids it."""


class DegenerateIntervalError(EstimationError):
    """A conditional moment was requested on a region of (numerically) zero mass."""


class GridOverflowError(EstimationError):
    """A value table exceeded the configured cap; the error grid is too narrow."""


class OutOfRangeError(EstimationError):
    """An evaluation point lies outside the usable part of an error grid."""


class UnsupportedPolicyError(EstimationError):
    """The policy/plant combination has no tractable remote estimator."""


class EnumerationLimitError(EstimationError):
    """An exhaustive search would exceed its declared enumeration bound."""
