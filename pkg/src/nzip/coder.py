"""Integer arithmetic coding over quantized probability distributions.

The construction is the classic carry-free low/high register coder with
32-bit state and 16-bit probability precision.  Encoder and decoder are
exact mirrors: feeding the decoder the same cdf sequence the encoder saw
reproduces the symbol sequence bit for bit.  Probability quantization is
deterministic (largest-remainder with index tie-break), so both ends derive
identical integer cdfs from identical float distributions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PrecisionTooLow

PRECISION_DEFAULT = 16

_STATE_BITS = 32
_FULL = (1 << _STATE_BITS) - 1
_HALF = 1 << (_STATE_BITS - 1)
_QUARTER = 1 << (_STATE_BITS - 2)
_THREE_QUARTERS = _HALF + _QUARTER


@dataclass(frozen=True)
class QuantizedCdf:
    """Integer cumulative distribution: cum[0]=0, cum[V]=2**precision.

    Strictly increasing, so every symbol keeps mass >= 1 and stays
    decodable no matter how small its modelled probability was.
    """

    cum: np.ndarray  # int64, length V + 1
    precision: int = PRECISION_DEFAULT

    @property
    def total(self) -> int:
        return int(self.cum[-1])

    def mass(self, symbol: int) -> int:
        return int(self.cum[symbol + 1] - self.cum[symbol])

    def validate(self) -> None:
        if self.cum[0] != 0 or self.cum[-1] != (1 << self.precision):
            raise ValueError("cdf endpoints must be 0 and 2**precision")
        if np.any(np.diff(self.cum) < 1):
            raise ValueError("every symbol needs mass >= 1")


def quantize_batch(p: np.ndarray, precision: int = PRECISION_DEFAULT) -> np.ndarray:
    """Quantize a batch of distributions to integer masses, row-wise.

    Rows of `p` are probability vectors; the result is an int64 array of the
    same shape whose rows sum to exactly 2**precision with every entry >= 1.
    Largest-remainder rounding first, then a floor pass that raises zero
    entries to 1, repaying one unit at a time from the currently largest
    entry.  All ties break toward the lowest symbol index.
    """
    p = np.atleast_2d(np.asarray(p, dtype=np.float64))
    rows, v = p.shape
    total = 1 << precision
    if v > total:
        raise PrecisionTooLow(f"{v} symbols cannot each get mass at {precision} bits")

    # Normalize defensively; model outputs sum to 1 only within float error.
    p = p / p.sum(axis=1, keepdims=True)
    scaled = p * float(total)
    masses = np.floor(scaled).astype(np.int64)
    remainders = scaled - masses

    deficit = total - masses.sum(axis=1)
    order = np.argsort(-remainders, axis=1, kind="stable")
    take = np.arange(v)[None, :] < deficit[:, None]
    np.add.at(masses, (np.repeat(np.arange(rows), v)[take.ravel()], order.ravel()[take.ravel()]), 1)

    # Floor pass: promote zero-mass symbols to 1, repaying from the largest.
    need = np.count_nonzero(masses == 0, axis=1)
    if need.any():
        masses[masses == 0] = 1
        while True:
            active = np.flatnonzero(need > 0)
            if active.size == 0:
                break
            donors = np.where(masses[active] >= 2, masses[active], -1)
            idx = np.argmax(donors, axis=1)  # first max -> lowest index
            masses[active, idx] -= 1
            need[active] -= 1
    return masses


def quantize(p: np.ndarray, precision: int = PRECISION_DEFAULT) -> QuantizedCdf:
    """Quantize one probability vector into a QuantizedCdf."""
    masses = quantize_batch(np.asarray(p), precision)[0]
    return QuantizedCdf(masses_to_cum(masses), precision)


def masses_to_cum(masses: np.ndarray) -> np.ndarray:
    """Prefix-sum integer masses into a cdf array (leading zero included)."""
    cum = np.zeros(masses.shape[0] + 1, dtype=np.int64)
    np.cumsum(masses, out=cum[1:])
    return cum


def uniform_cdf(alphabet_size: int, precision: int = PRECISION_DEFAULT) -> QuantizedCdf:
    """Quantized uniform distribution; the codec uses it for window warm-up."""
    return quantize(np.full(alphabet_size, 1.0 / alphabet_size), precision)


class AdaptiveCountsModel:
    """Order-0 adaptive frequency model producing QuantizedCdf snapshots.

    Counts start at one per symbol and grow by `increment` each update;
    once the total nears the precision budget the counts halve (rounding
    up, so no symbol ever loses its floor of one).  Encoder and decoder
    update in lockstep, so their cdf sequences agree without signalling.
    """

    def __init__(self, alphabet_size: int, increment: int = 32, precision: int = PRECISION_DEFAULT):
        if alphabet_size > (1 << precision):
            raise PrecisionTooLow("alphabet larger than the precision budget")
        self.counts = np.ones(alphabet_size, dtype=np.int64)
        self.increment = increment
        self.precision = precision
        self._ceiling = (1 << precision) - increment

    def cdf(self) -> QuantizedCdf:
        total = int(self.counts.sum())
        budget = 1 << self.precision
        scaled = self.counts * budget
        masses = scaled // total
        remainders = scaled - masses * total
        deficit = budget - int(masses.sum())
        if deficit:
            order = np.argsort(-remainders, kind="stable")
            masses[order[:deficit]] += 1
        return QuantizedCdf(masses_to_cum(masses), self.precision)

    def update(self, symbol: int) -> None:
        self.counts[symbol] += self.increment
        if int(self.counts.sum()) > self._ceiling:
            self.counts = (self.counts + 1) >> 1


class BitWriter:
    """MSB-first bit sink; the final partial byte is zero-padded."""

    def __init__(self) -> None:
        self._bytes = bytearray()
        self._acc = 0
        self._nacc = 0
        self.bit_count = 0

    def write(self, bit: int) -> None:
        self._acc = (self._acc << 1) | bit
        self._nacc += 1
        self.bit_count += 1
        if self._nacc == 8:
            self._bytes.append(self._acc)
            self._acc = 0
            self._nacc = 0

    def getvalue(self) -> bytes:
        out = bytes(self._bytes)
        if self._nacc:
            out += bytes([self._acc << (8 - self._nacc)])
        return out


class BitReader:
    """MSB-first bit source; reads past the declared length yield zeros."""

    def __init__(self, data: bytes, bit_count: int):
        self._data = data
        self._bit_count = bit_count
        self._pos = 0

    def read(self) -> int:
        if self._pos >= self._bit_count:
            return 0
        byte = self._data[self._pos >> 3]
        bit = (byte >> (7 - (self._pos & 7))) & 1
        self._pos += 1
        return bit


def _cum_of(cdf) -> np.ndarray:
    return cdf.cum if isinstance(cdf, QuantizedCdf) else cdf


class Encoder:
    """Arithmetic encoder; one instance per output stream, strictly serial."""

    def __init__(self) -> None:
        self.low = 0
        self.high = _FULL
        self.pending = 0
        self.out = BitWriter()

    def _emit(self, bit: int) -> None:
        self.out.write(bit)
        inverse = bit ^ 1
        for _ in range(self.pending):
            self.out.write(inverse)
        self.pending = 0

    def encode_symbol(self, cdf, symbol: int) -> None:
        cum = _cum_of(cdf)
        total = int(cum[-1])
        span = self.high - self.low + 1
        self.high = self.low + span * int(cum[symbol + 1]) // total - 1
        self.low = self.low + span * int(cum[symbol]) // total
        while True:
            if self.high < _HALF:
                self._emit(0)
            elif self.low >= _HALF:
                self._emit(1)
                self.low -= _HALF
                self.high -= _HALF
            elif self.low >= _QUARTER and self.high < _THREE_QUARTERS:
                self.pending += 1
                self.low -= _QUARTER
                self.high -= _QUARTER
            else:
                break
            self.low <<= 1
            self.high = (self.high << 1) | 1

    def finish(self) -> bytes:
        """Flush the disambiguating tail (at most 33 bits) and return bytes."""
        self.pending += 1
        self._emit(0 if self.low < _QUARTER else 1)
        return self.out.getvalue()

    @property
    def bit_count(self) -> int:
        return self.out.bit_count


class Decoder:
    """Arithmetic decoder; must see the cdf sequence the encoder used."""

    def __init__(self, data: bytes, bit_count: int):
        self.inp = BitReader(data, bit_count)
        self.low = 0
        self.high = _FULL
        self.code = 0
        for _ in range(_STATE_BITS):
            self.code = (self.code << 1) | self.inp.read()

    def decode_symbol(self, cdf) -> int:
        cum = _cum_of(cdf)
        total = int(cum[-1])
        span = self.high - self.low + 1
        value = ((self.code - self.low + 1) * total - 1) // span
        symbol = int(np.searchsorted(cum, value, side="right")) - 1
        self.high = self.low + span * int(cum[symbol + 1]) // total - 1
        self.low = self.low + span * int(cum[symbol]) // total
        while True:
            if self.high < _HALF:
                pass
            elif self.low >= _HALF:
                self.low -= _HALF
                self.high -= _HALF
                self.code -= _HALF
            elif self.low >= _QUARTER and self.high < _THREE_QUARTERS:
                self.low -= _QUARTER
                self.high -= _QUARTER
                self.code -= _QUARTER
            else:
                break
            self.low <<= 1
            self.high = (self.high << 1) | 1
            self.code = (self.code << 1) | self.inp.read()
        return symbol
