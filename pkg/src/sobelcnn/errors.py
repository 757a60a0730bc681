"""Exception types shared across the package.

The CLI maps these onto its documented exit codes: data problems -> 3,
training divergence -> 4, checkpoint/file corruption -> 5.
"""


class SobelCnnError(Exception):
    """Base class for all package-specific errors."""


class ShapeError(SobelCnnError, ValueError):
    """Tensor shapes inconsistent with an operation's contract."""


class DataError(SobelCnnError):
    """Dataset layout or content problem."""


class MissingFileError(DataError):
    """A required input file does not exist."""


class UnsupportedFormatError(DataError):
    """Image file is not a supported format (PNG or JPEG)."""


class CorruptImageError(DataError):
    """Image file exists but its stream cannot be decoded."""


class EmptyClassError(DataError):
    """A class directory contains no usable images."""


class DivergenceError(SobelCnnError):
    """Training produced a non-finite loss."""


class CheckpointError(SobelCnnError):
    """Checkpoint file is corrupt, truncated, or inconsistent."""
