"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid shapes, specs, or configuration values."""


class UsageError(RuntimeError):
    """API misuse, e.g. backward before forward."""


class CheckpointError(RuntimeError):
    """Unreadable, truncated, or incompatible checkpoint files."""


class DataError(RuntimeError):
    """Missing or malformed dataset files."""
