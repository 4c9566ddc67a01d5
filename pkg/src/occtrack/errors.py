"""Exception types shared across the tracker."""


class TrackError(Exception):
    """Base class for all tracker-specific failures."""


class PatchOutOfFrame(TrackError):
    """Requested box lies entirely outside the image bounds."""


class PatchTooSmall(TrackError):
    """Patch is too small for the requested feature geometry."""


class NeedsColor(TrackError):
    """Operation requires an RGB input but got grayscale."""


class ShapeMismatch(TrackError):
    """Operands disagree on grid shape or channel count."""


class NumericalBlowup(TrackError):
    """Optimizer produced non-finite values."""

    def __init__(self, message: str, iteration: int | None = None):
        super().__init__(message)
        self.iteration = iteration


class DegenerateResponse(TrackError):
    """Response map carries no usable localization signal."""


class DegenerateQuality(TrackError):
    """Quality score is non-positive or otherwise unusable."""


class InitFailed(TrackError):
    """Tracker could not be initialized from the given frame and box."""


class BadSpec(TrackError):
    """Synthetic-sequence description is infeasible or malformed."""
