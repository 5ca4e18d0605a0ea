"""Byte-stream ingestion: alphabet detection, symbol mapping, part splitting.

The compressor works on alphabet *indices*, not raw byte values.  The
alphabet is canonical (distinct bytes, ascending), so both ends of the codec
derive identical index assignments from the byte list stored in the archive
header.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AlphabetMismatch, EmptyInput


@dataclass(frozen=True)
class Alphabet:
    """Bidirectional mapping between observed byte values and dense indices.

    index_to_byte is sorted ascending; byte_to_index is its inverse.
    """

    index_to_byte: tuple[int, ...]

    @property
    def size(self) -> int:
        return len(self.index_to_byte)

    @property
    def byte_to_index(self) -> dict[int, int]:
        return {b: i for i, b in enumerate(self.index_to_byte)}

    def lookup_table(self) -> np.ndarray:
        """256-entry int16 table mapping byte value -> index, -1 if absent."""
        table = np.full(256, -1, dtype=np.int16)
        for i, b in enumerate(self.index_to_byte):
            table[b] = i
        return table

    def __post_init__(self) -> None:
        if not 1 <= len(self.index_to_byte) <= 256:
            raise ValueError("alphabet size must be in [1, 256]")
        if list(self.index_to_byte) != sorted(set(self.index_to_byte)):
            raise ValueError("alphabet bytes must be distinct and ascending")


@dataclass
class SymbolStream:
    """A byte input re-expressed as indices into its alphabet."""

    symbols: np.ndarray  # int32, values in [0, alphabet.size)
    alphabet: Alphabet

    @property
    def length(self) -> int:
        return int(self.symbols.shape[0])

    def to_bytes(self) -> bytes:
        return unmap_symbols(self.symbols, self.alphabet)


@dataclass(frozen=True)
class ContextWindow:
    """The fixed-length slice of history a predictor conditions on.

    Positions closer than context_len symbols to the start of a part cannot
    fill a window; the codec codes them under a uniform distribution instead.
    """

    context_len: int
    window: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.window) != self.context_len:
            raise ValueError("window must hold exactly context_len symbols")


@dataclass(frozen=True)
class PartLayout:
    """Contiguous split of a stream into parts coded in lockstep."""

    boundaries: tuple[int, ...]  # num_parts + 1 offsets, 0 .. N

    @property
    def num_parts(self) -> int:
        return len(self.boundaries) - 1

    def part_sizes(self) -> list[int]:
        return [self.boundaries[i + 1] - self.boundaries[i] for i in range(self.num_parts)]

    def max_size(self) -> int:
        return max(self.part_sizes()) if self.num_parts else 0


def detect_alphabet(data: bytes) -> Alphabet:
    """Preliminary pass collecting the distinct bytes, in canonical order."""
    if len(data) == 0:
        raise EmptyInput("cannot build an alphabet from empty input")
    values = np.unique(np.frombuffer(data, dtype=np.uint8))
    return Alphabet(tuple(int(v) for v in values))


def map_symbols(data: bytes, alphabet: Alphabet) -> SymbolStream:
    """Translate bytes to alphabet indices; rejects bytes outside the alphabet."""
    raw = np.frombuffer(data, dtype=np.uint8)
    mapped = alphabet.lookup_table()[raw]
    if mapped.size and mapped.min() < 0:
        bad = int(raw[np.argmax(mapped < 0)])
        raise AlphabetMismatch(f"byte 0x{bad:02x} is not in the alphabet")
    return SymbolStream(mapped.astype(np.int32), alphabet)


def unmap_symbols(symbols: np.ndarray, alphabet: Alphabet) -> bytes:
    """Inverse of map_symbols."""
    table = np.asarray(alphabet.index_to_byte, dtype=np.uint8)
    return table[symbols].tobytes()


def split_parts(length: int, num_parts: int) -> PartLayout:
    """Split [0, length) into num_parts contiguous runs of near-equal size.

    The remainder goes to the earliest parts, so sizes differ by at most one
    and the layout is a pure function of (length, num_parts).
    """
    if num_parts < 1:
        raise ValueError("num_parts must be >= 1")
    base, rem = divmod(length, num_parts)
    sizes = [base + 1 if p < rem else base for p in range(num_parts)]
    bounds = [0]
    for s in sizes:
        bounds.append(bounds[-1] + s)
    return PartLayout(tuple(bounds))


def sliding_windows(symbols: np.ndarray, context_len: int) -> np.ndarray:
    """View of shape (N - context_len + 1, context_len) over the stream.

    Row i is symbols[i : i + context_len]; a zero-copy view, so callers must
    not write through it.
    """
    if symbols.shape[0] < context_len:
        raise ValueError("stream shorter than the context length")
    return np.lib.stride_tricks.sliding_window_view(symbols, context_len)
