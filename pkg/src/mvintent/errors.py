"""Exception hierarchy.

Every error raised by this package derives from :class:`MVIntentError` so
callers (CLI, service) can map failures to exit codes / HTTP statuses without
enumerating modules.
"""


class MVIntentError(Exception):
    """Base class for all package errors."""


class DimensionMismatchError(MVIntentError, ValueError):
    """Operand shapes are incompatible."""


class EmptyInputError(MVIntentError, ValueError):
    """An operation received an empty input it cannot handle."""


class DegenerateInputError(MVIntentError, ValueError):
    """Input is technically valid but statistically degenerate (e.g. zero variance)."""


class InsufficientItemsError(MVIntentError, ValueError):
    """A sampling request asked for more items than a pool can provide."""


class FeatureFileError(MVIntentError, ValueError):
    """Feature file cannot be parsed."""


class BadMagicError(FeatureFileError):
    """File does not start with the expected magic bytes."""


class TruncatedFileError(FeatureFileError):
    """File payload is shorter than its header declares."""


class DimensionOverflowError(FeatureFileError):
    """Declared dimensions exceed the supported size."""


class ManifestError(MVIntentError, ValueError):
    """Dataset manifest record is malformed."""


class CheckpointError(MVIntentError, ValueError):
    """Checkpoint file cannot be parsed."""


class VersionMismatchError(CheckpointError):
    """Checkpoint was written by an unsupported format version."""


class CorruptCheckpointError(CheckpointError):
    """Checkpoint payload is inconsistent with its header."""
