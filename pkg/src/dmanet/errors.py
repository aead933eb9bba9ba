"""Shared exception types."""


class ShapeError(ValueError):
    """An input tensor has the wrong rank, channel count, or spatial size."""


class ConfigError(ValueError):
    """A configuration value violates its documented constraints."""


class DataError(ValueError):
    """A dataset directory is malformed: orphaned files, unreadable images,
    or labels outside the declared class range."""


class WeightsError(ValueError):
    """A weight archive does not line up with the module it is loaded into."""
