"""nzip: neural lossless byte compressor with a stored bootstrap model."""

__version__ = "0.1.0"

from .errors import (
    AlphabetMismatch,
    CorruptArchive,
    DegenerateAlphabet,
    EmptyInput,
    NzipError,
    NumericError,
    PrecisionTooLow,
    TooShortForTraining,
    UnsupportedVersion,
)

__all__ = [
    "AlphabetMismatch",
    "CorruptArchive",
    "DegenerateAlphabet",
    "EmptyInput",
    "NzipError",
    "NumericError",
    "PrecisionTooLow",
    "TooShortForTraining",
    "UnsupportedVersion",
    "__version__",
]
