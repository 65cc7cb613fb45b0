"""Exception types raised across the package."""


class QuadmeanError(Exception):
    """Base class for all package errors."""


class InvalidPoint(QuadmeanError, ValueError):
    pass


class IncompatibleSpace(QuadmeanError, TypeError):
    """A cost, distance or structure was paired with a space it does not support."""


class NonUniqueProjection(QuadmeanError):
    """Raised when a point has two (numerically) tied closest points in the space."""

    def __init__(self, raw, candidates):
        self.raw = raw
        self.candidates = candidates
        super().__init__(f"projection of {raw} is not unique: {candidates}")


class PointAtBase(QuadmeanError, ValueError):
    """A normalized quotient was requested at the base point itself."""


class EmptySample(QuadmeanError, ValueError):
    pass


class InvalidCenter(QuadmeanError, ValueError):
    """The proposed minimizer has a larger objective than some probe point."""


class NothingToFit(QuadmeanError, ValueError):
    pass


class AllZeroLoss(QuadmeanError, ValueError):
    pass


class TooFewReplications(QuadmeanError, ValueError):
    pass
