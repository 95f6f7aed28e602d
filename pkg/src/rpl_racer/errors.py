"""Exception types shared across the package."""


class RacerError(Exception):
    """Base class for package errors."""


class ConfigError(RacerError):
    """Invalid or inconsistent configuration."""


class MapError(RacerError):
    """Bad map image or metadata."""


class RacingLineError(RacerError):
    """Malformed or inconsistent racing-line data."""


class AssetError(RacerError):
    """Missing or unreadable track asset."""


class StartPlacementError(RacerError):
    """Could not place the vehicle collision-free on the racing line."""
