"""Exception types shared across the package."""


class RankSelectError(Exception):
    """Base class for all errors raised by rankselect."""


class InvalidMatrix(RankSelectError, ValueError):
    pass


class ShapeError(RankSelectError, ValueError):
    pass


class RankOutOfRange(RankSelectError, ValueError):
    pass


class InfeasibleVarianceEstimate(RankSelectError, ValueError):
    """Raised when ``||Y - PY||^2 / ((n - q) m)`` has no degrees of freedom."""


class NoAdmissibleRank(RankSelectError, ValueError):
    pass


class ConfigError(RankSelectError, ValueError):
    pass


class NotAvailable(RankSelectError):
    """A requested quantity is undefined for this input (e.g. singular X'X)."""


class TraceInvariantError(RankSelectError, AssertionError):
    """A self-tuning trace broke monotonicity or termination guarantees."""


class ZeroDesign(RankSelectError, UserWarning):
    """Emitted (as a warning) when X is identically zero."""


class DegenerateTie(UserWarning):
    """Closed-form count and criterion argmin disagree on an exact tie."""
