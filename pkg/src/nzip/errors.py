"""Exception hierarchy shared across the package.

Every error a caller is expected to handle derives from NzipError; logic
errors (shape mismatches, out-of-range indices) raise plain ValueError /
IndexError because they indicate caller bugs, not data conditions.
"""


class NzipError(Exception):
    """Base class for all recoverable nzip errors."""


class EmptyInput(NzipError):
    """The input holds zero bytes; only a header-only archive is possible."""


class DegenerateAlphabet(NzipError):
    """The input uses a single distinct byte; no modelling is needed."""


class AlphabetMismatch(NzipError):
    """A byte outside the declared alphabet was encountered."""


class TooShortForTraining(NzipError):
    """The stream is not longer than the context window; nothing to train on."""


class NumericError(NzipError):
    """A non-finite value appeared where finite arithmetic was required."""


class PrecisionTooLow(NzipError):
    """The coder precision cannot give every symbol a nonzero mass."""


class CorruptArchive(NzipError):
    """The archive failed structural parsing or checksum verification."""


class UnsupportedVersion(NzipError):
    """The archive declares a format version this build does not read."""
