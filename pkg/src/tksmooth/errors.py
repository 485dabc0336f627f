"""Exception types raised across the package."""


class NotPositiveDefinite(ValueError):
    """A matrix (or pivot block) that must be positive definite is not.

    ``block`` is the 1-based index of the offending block when known.
    ``iterate`` optionally carries the state sequence at which the failure
    occurred, so that callers can inspect it after an aborted run.
    """

    def __init__(self, message, block=None, iterate=None):
        super().__init__(message)
        self.block = block
        self.iterate = iterate


class DimensionMismatch(ValueError):
    """Array shapes are inconsistent with the declared dimensions."""


class InvalidPreset(ValueError):
    """Unknown smoother preset or an invalid preset configuration."""
