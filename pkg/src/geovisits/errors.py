"""Exception types shared across the pipeline."""


class GeovisitsError(Exception):
    """Base class for all package errors."""


class InputError(GeovisitsError):
    """Bad user input or configuration; maps to CLI exit code 2."""


class TimeRangeError(InputError):
    """Instant outside the configured local-time rule range."""


class MapError(InputError):
    """Landuse map or taxonomy failed validation."""
