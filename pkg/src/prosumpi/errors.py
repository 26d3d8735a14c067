"""Exception hierarchy shared by all prosumpi modules."""


class PIError(Exception):
    """Base class for every error raised by prosumpi."""


class ConfigurationError(PIError, ValueError):
    """A parameter or configuration violates a precondition."""


class IngestionError(PIError, ValueError):
    """Input data is malformed, non-finite, unordered or has gaps."""


class SnapshotError(IngestionError):
    """A snapshot file is truncated, corrupted or of the wrong version."""


class EmptyHistogramError(PIError, LookupError):
    """A quantile was requested from a histogram that holds no data."""


class StateError(PIError, RuntimeError):
    """An operation was called on an object in the wrong state."""
