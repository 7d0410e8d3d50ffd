"""Exception types raised across the package."""


class WindscenError(Exception):
    """Base class for all package errors."""


class PanelFormatError(WindscenError):
    """A CSV input does not follow its schema."""

    def __init__(self, message: str, path=None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class InsufficientDataError(WindscenError):
    """Not enough usable rows to fit or evaluate something."""


class FeatureUnavailableError(WindscenError):
    """An online feature cannot be computed because an input is missing."""

    def __init__(self, feature: str, message: str | None = None):
        self.feature = feature
        super().__init__(message or f"feature {feature!r} is unavailable")


class BundleFormatError(WindscenError):
    """A persisted bundle is malformed, truncated or of the wrong version."""


class ChecksumError(BundleFormatError):
    """The bundle checksum does not match its contents."""
