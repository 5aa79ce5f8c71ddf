"""Exception hierarchy shared across the package.

The CLI maps these onto exit statuses: ConfigError -> 2, DataError -> 3,
BackendError -> 4.
"""


class MetabenchError(Exception):
    pass


class ConfigError(MetabenchError):
    """Invalid configuration: bad flag, unknown condition name, bad config file."""


class DataError(MetabenchError):
    """Unusable input data or missing stage artifact."""


class CatalogLoadError(DataError):
    """Catalogue entry violates the record contract (missing id/title, duplicates)."""


class CatalogParseError(DataError):
    """Catalogue file is not parseable; carries a byte offset when known."""

    def __init__(self, message: str, byte_offset: int | None = None):
        super().__init__(message)
        self.byte_offset = byte_offset


class SamplingError(DataError):
    """A table file could not be sampled (unreadable, empty, or headerless)."""


class BackendError(MetabenchError):
    """A remote text-generation or embedding backend failed."""


class AuthError(BackendError):
    """The backend rejected the request outright (auth or config); not retryable."""


class GenerationFailed(BackendError):
    """One generation request failed after retries; callers may skip the record."""
