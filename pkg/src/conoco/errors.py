"""Exception hierarchy shared by the library and the CLI."""

from __future__ import annotations


class ConocoError(Exception):
    """Base class for every error raised by this package."""


class BandEdgeError(ConocoError, ValueError):
    """A frequency band is inverted, empty, or outside the valid range."""


class EmptyBandError(ConocoError, ValueError):
    """A band selects no frequency bins."""


class InsufficientDataError(ConocoError, ValueError):
    """A sequence is too short for the requested analysis."""


class ConfigurationError(ConocoError, ValueError):
    """Inconsistent rates, shapes, or scenario parameters."""


class DataFormatError(ConocoError, ValueError):
    """A file on disk does not follow the expected format."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ReplicationError(ConocoError, RuntimeError):
    """A replication failed; the message names its index and seed."""

    def __init__(self, message: str, index: int, seed: int):
        super().__init__(f"replication {index} (seed {seed}): {message}")
        self.index = index
        self.seed = seed
