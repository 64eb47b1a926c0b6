"""Exception hierarchy shared across the pipeline stages."""


class CyriskError(Exception):
    """Base class for all library errors."""


class DataError(CyriskError):
    """Malformed, missing, or inconsistent input data."""


class NumericError(CyriskError):
    """A numerical procedure failed (divergence, singularity, ...)."""


class ConfigError(CyriskError):
    """Invalid or incomplete run configuration."""
