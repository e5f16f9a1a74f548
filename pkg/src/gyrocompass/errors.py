"""Exception types shared across the package."""


class GyrocompassError(Exception):
    """Base class for all library errors."""


class ConfigError(GyrocompassError):
    """Invalid configuration value or malformed config document."""


class ShapeError(GyrocompassError):
    """Array shape does not match the expected layout."""


class DegenerateSignal(GyrocompassError):
    """Angular-rate signal carries no heading information."""


class EmptyWindow(GyrocompassError):
    """Averaging window covers no samples (or exceeds the sequence)."""


class RateMismatch(GyrocompassError):
    """Source and target sample rates have a non-integer ratio."""


class MissingLabel(GyrocompassError):
    """Operation requires a heading label the sequence does not carry."""


class DegenerateSequence(GyrocompassError):
    """Sequence statistics too small to normalize against."""


class DivergenceError(GyrocompassError):
    """Training loss became non-finite."""


class EmptyBatch(GyrocompassError):
    """Metric requested over an empty batch."""


class MissingArtifact(GyrocompassError):
    """A prerequisite artifact (dataset, checkpoint) does not exist."""


class MissingCheckpoint(MissingArtifact):
    """A referenced model checkpoint does not exist."""


class FormatError(GyrocompassError):
    """Persisted file violates its documented format."""


class ChecksumError(GyrocompassError):
    """Stored checksum does not match the file contents."""
