"""Exception taxonomy shared across the package."""


class CurateError(Exception):
    """Base class for every package-specific error."""


class DataError(CurateError):
    """Malformed or inconsistent input data (CLI exit code 2)."""


class ServiceError(CurateError):
    """External service failure (CLI exit code 3)."""
