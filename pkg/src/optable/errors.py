"""Exception types raised by optable."""


class OptableError(Exception):
    """Base class; ``code`` is the short machine-readable tag the CLI prints."""

    code = "error"


class ImageDecodeError(OptableError, ValueError):
    code = "decode"


class ImageSizeError(OptableError, ValueError):
    code = "image_size"


class BoundsError(OptableError, IndexError):
    code = "bounds"


class EmptyIndexError(OptableError, ValueError):
    code = "empty_index"


class DatasetError(OptableError, ValueError):
    code = "dataset"


class DimensionMismatchError(OptableError, ValueError):
    code = "dimension_mismatch"


class UndefinedScoreError(OptableError, ValueError):
    """Raised when Az is requested for a mask holding a single class."""

    code = "undefined_score"


class ConfigError(OptableError, ValueError):
    code = "config"


class ManifestError(OptableError, ValueError):
    code = "manifest"
