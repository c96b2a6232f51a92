"""Exception hierarchy shared across the pipeline."""


class GaitmoodError(Exception):
    """Base class for all gaitmood errors."""


class ParseError(GaitmoodError):
    """Malformed file content (bad header, bad row); message carries the line number."""


class DataError(GaitmoodError):
    """Data violates a structural invariant (non-monotonic timestamps, non-finite values)."""


class EmptySegmentError(DataError):
    """A walking segment has no overlap with the sensor stream."""


class AlignmentError(DataError):
    """A window cannot be aligned to the gyroscope stream (gap too large)."""


class MissingHeartRateError(DataError):
    """No heart-rate sample available at or before a window's end."""


class ConfigError(GaitmoodError):
    """Invalid configuration value or incompatible option combination."""


class ProtocolError(GaitmoodError):
    """An evaluation protocol's preconditions are not met (too few samples/users)."""


class DegenerateDataError(GaitmoodError):
    """Input is degenerate for the requested statistic or model (zero variance, one class)."""
