"""Exception hierarchy shared by every layer of the archive."""


class RLZError(Exception):
    """Base class for all archive errors."""


class ParameterError(RLZError, ValueError):
    """Invalid argument or inconsistent configuration."""


class CorruptionError(RLZError):
    """Encoded data failed to parse or disagrees with its own metadata."""


class ArchiveIOError(RLZError, OSError):
    """Underlying read or write failed."""
