"""Exception types shared across the toolkit."""


class ImageFormatError(ValueError):
    """Unreadable, non-grayscale, or otherwise malformed image file."""


class EmptyForegroundError(ValueError):
    """An operation that needs foreground blocks got an all-background mask."""

    def __init__(self, message: str = "empty foreground"):
        super().__init__(message)


class InsufficientOverlapError(ValueError):
    """Two feature maps share too few mutually valid cells to compare."""

    def __init__(self, message: str = "insufficient overlap"):
        super().__init__(message)


class ManifestError(ValueError):
    """Structurally invalid dataset manifest."""


class ConfigError(ValueError):
    """Unknown or malformed configuration key/value."""
