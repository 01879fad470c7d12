"""Exception types shared across the library."""


class TransportOpsError(Exception):
    """Base class for every error raised by this package."""


class DimensionMismatch(TransportOpsError):
    """Operand shapes are incompatible."""


class NonFiniteError(TransportOpsError):
    """A computation produced NaN or infinity, or an objective diverged."""


class ConvergenceFailure(TransportOpsError):
    """An iterative kernel failed to converge."""


class InvalidScale(TransportOpsError):
    """A scale parameter that must be positive (or nonnegative) was not."""


class FeatureMismatch(TransportOpsError):
    """Feature rows do not line up with the dataset points."""


class DegenerateData(TransportOpsError):
    """The input data admits no meaningful answer (e.g. all points identical)."""


class DegenerateLabels(TransportOpsError):
    """Labels do not span enough classes."""


class UnlabeledPoint(TransportOpsError):
    """An operation that requires a class label received an unlabeled point."""


class EmptyClass(TransportOpsError):
    """A class index has no member points."""


class DivergedError(TransportOpsError):
    """Training left the finite regime (exploding magnitudes or loss)."""
