"""Deterministic pseudorandom primitives.

Everything the compressor randomizes (weight init, epoch shuffles, synthetic
sources) is derived from one 64-bit seed through SplitMix64, a counter-based
mixer from the xoshiro generator family.  Counter-based means the n-th value
is a pure function of (seed, n), so whole arrays can be produced with
vectorized uint64 arithmetic and the stream is identical on every platform,
which is what lets the decoder rebuild the exact same parameters.
"""

from __future__ import annotations

import numpy as np

_MASK64 = np.uint64(0xFFFFFFFFFFFFFFFF)
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)

# FNV-1a 64-bit constants, used for label hashing and the input checksum.
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x00000100000001B3


def _mix64(x: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer over a uint64 array."""
    with np.errstate(over="ignore"):
        x = (x ^ (x >> np.uint64(30))) * _MIX1
        x = (x ^ (x >> np.uint64(27))) * _MIX2
        return x ^ (x >> np.uint64(31))


def random_uint64(seed: int, count: int, offset: int = 0) -> np.ndarray:
    """Values offset..offset+count-1 of the SplitMix64 stream for `seed`."""
    idx = np.arange(offset + 1, offset + count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        state = (np.uint64(seed & 0xFFFFFFFFFFFFFFFF) + idx * np.uint64(_GOLDEN)) & _MASK64
    return _mix64(state)


def random_floats(seed: int, count: int, offset: int = 0) -> np.ndarray:
    """i.i.d. uniforms in [0, 1) as float64, from the 53 top mantissa bits."""
    bits = random_uint64(seed, count, offset)
    return (bits >> np.uint64(11)).astype(np.float64) * (2.0**-53)


def random_bits(seed: int, count: int, offset: int = 0) -> np.ndarray:
    """i.i.d. fair bits as uint8."""
    return (random_uint64(seed, count, offset) >> np.uint64(63)).astype(np.uint8)


def uniform_init(seed: int, shape: tuple[int, ...], scale: float) -> np.ndarray:
    """float32 tensor with entries uniform in [-scale, +scale]."""
    n = int(np.prod(shape)) if shape else 1
    u = random_floats(seed, n)
    return ((u * 2.0 - 1.0) * scale).astype(np.float32).reshape(shape)


def fnv1a(data: bytes, h: int = _FNV_OFFSET) -> int:
    """Plain byte-wise FNV-1a 64.  Fine for short inputs such as labels."""
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def derive_seed(master: int, label: str) -> int:
    """Independent substream seed for a named purpose (init, shuffle, ...)."""
    return fnv1a(label.encode("utf-8"), h=(master ^ _FNV_OFFSET) & 0xFFFFFFFFFFFFFFFF)


def checksum(data: bytes) -> int:
    """64-bit FNV-class content hash over the input.

    The multiply-xor chain runs over little-endian 8-byte words instead of
    single bytes so multi-megabyte inputs hash in tenths of a second; the
    tail and the total length are folded in byte-wise.
    """
    h = _FNV_OFFSET
    n_words = len(data) // 8
    if n_words:
        words = np.frombuffer(data, dtype="<u8", count=n_words)
        for w in words.tolist():
            h = ((h ^ w) * _FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    h = fnv1a(data[n_words * 8 :], h)
    return fnv1a(len(data).to_bytes(8, "little"), h)
