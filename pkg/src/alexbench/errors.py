"""Typed exceptions raised across the package.

Everything data-shaped subclasses ValueError so callers that only know
stdlib semantics still catch the right category.
"""


class BadMagicError(ValueError):
    """File does not start with the expected IDX magic word."""


class TruncatedError(ValueError):
    """Byte length disagrees with the dimensions declared in the header."""


class DimensionOverflowError(ValueError):
    """A declared dimension exceeds the sanity bound (1e8)."""


class LabelOutOfRangeError(ValueError):
    """A label byte is >= the number of classes."""


class InsufficientClassCountError(ValueError):
    """A class has fewer instances than the requested per-class seed count."""


class UnsupportedArchitectureError(ValueError):
    """Unknown architecture identifier."""


class EmptyPoolError(ValueError):
    """Operation requires a non-empty pool."""


class EmptyBatchError(ValueError):
    """Operation requires a non-empty batch."""


class DimensionMismatchError(ValueError):
    """Input dimensions incompatible with the model or grid."""


class BadGridError(ValueError):
    """Patch grid does not tile the image exactly."""


class SingularSystemError(ValueError):
    """Unregularized least-squares system is rank deficient."""


class BatchTooLargeError(ValueError):
    """Requested batch size exceeds the unlabeled pool."""


class NoCentroidsError(ValueError):
    """Density-weighted selection invoked without precomputed centroids."""


class MissingSurrogateError(ValueError):
    """Divergence-based selection invoked without a fitted surrogate."""


class TooFewPointsError(ValueError):
    """Fewer points than requested clusters."""


class PoolExhaustedError(RuntimeError):
    """Unlabeled pool smaller than the selection batch."""


class CorruptCheckpointError(RuntimeError):
    """Checkpoint content digest does not match its payload."""
