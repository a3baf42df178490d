"""Exception types shared across the package."""


class OovtuneError(Exception):
    """Base class for all package-specific errors."""


class DimensionError(OovtuneError, ValueError):
    """Array shapes are inconsistent with the requested operation."""


class CoverageError(OovtuneError, ValueError):
    """Text contains a character the vocabulary cannot represent."""

    def __init__(self, character: str):
        self.character = character
        super().__init__(f"character {character!r} is not covered by the vocabulary")


class DataError(OovtuneError, ValueError):
    """Malformed manifest, subset, or corpus input."""


class ConfigError(OovtuneError, ValueError):
    """Invalid configuration value or file."""


class NumericsError(OovtuneError, RuntimeError):
    """Non-finite value encountered where finite math is required."""
