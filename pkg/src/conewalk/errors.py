"""Exception types shared across the package."""


class ConewalkError(Exception):
    """Base class for package-specific failures."""


class RangeOverflowError(ConewalkError):
    """An exponent exceeded the safe double-precision range."""


class NoIntersectionError(ConewalkError):
    """A ray search never crossed the target level set."""


class DeltaTooLargeError(NoIntersectionError):
    """The tangential offset pushed the search line clear of the level set.

    Callers typically halve the offset and retry.
    """


class NonConvergenceError(ConewalkError):
    """An iterative solve failed to reach its tolerance."""


class ZeroGradientError(ConewalkError):
    """The gradient vanished at a point where a direction was required."""


class DomainSizeError(ConewalkError):
    """Truncated domain exceeds the configured state budget."""
