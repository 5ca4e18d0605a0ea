"""Synthetic binary sources with known entropy rates.

Two families: a pure XOR recurrence (entropy rate zero once the initial
bits are fixed) and its hidden-Markov variant where each emitted bit is the
hidden XOR bit flipped with probability noise_p (entropy rate = binary
entropy of noise_p).  Output is one ASCII byte per bit ('0'/'1') so the
generated files run through the byte pipeline unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .rng import derive_seed, random_bits, random_floats


@dataclass(frozen=True)
class SyntheticSpec:
    family: str  # "xor" or "hmm"
    k: int
    n: int
    noise_p: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.family not in ("xor", "hmm"):
            raise ValueError(f"unknown family {self.family!r}")
        if self.k < 1:
            raise ValueError("memory length k must be >= 1")
        if self.n <= self.k:
            raise ValueError("output length must exceed k")
        if not 0.0 <= self.noise_p <= 0.5:
            raise ValueError("noise_p must lie in [0, 0.5]")


def _xor_extend(init: np.ndarray, n: int) -> np.ndarray:
    """Continue S[i] = S[i-1] ^ S[i-1-k] from k+1 initial bits to length n.

    Each block of k+1 new symbols is a running-xor of the previous block
    against its last symbol, so generation is vectorized per block instead
    of per bit.
    """
    k = init.shape[0] - 1
    out = np.empty(n, dtype=np.uint8)
    out[: k + 1] = init
    pos = k + 1
    while pos < n:
        size = min(k + 1, n - pos)
        lagged = out[pos - 1 - k : pos - 1 - k + size]
        out[pos : pos + size] = out[pos - 1] ^ np.bitwise_xor.accumulate(lagged)
        pos += size
    return out


def _hidden_bits(spec: SyntheticSpec) -> np.ndarray:
    init = random_bits(derive_seed(spec.seed, "synth-init"), spec.k + 1)
    return _xor_extend(init, spec.n)


def gen_xor_k(spec: SyntheticSpec) -> bytes:
    """Pseudorandom XOR-k sequence; entropy rate 0."""
    bits = _hidden_bits(spec)
    return (0x30 + bits).astype(np.uint8).tobytes()


def gen_hmm_k(spec: SyntheticSpec) -> bytes:
    """Hidden XOR-k sequence observed through a binary symmetric channel."""
    x = _hidden_bits(spec)
    u = random_floats(derive_seed(spec.seed, "synth-noise"), spec.n)
    z = (u < spec.noise_p).astype(np.uint8)
    return (0x30 + (x ^ z)).astype(np.uint8).tobytes()


def generate(spec: SyntheticSpec) -> bytes:
    return gen_xor_k(spec) if spec.family == "xor" else gen_hmm_k(spec)


def entropy_rate(spec: SyntheticSpec) -> float:
    """Bits per character of the source: 0 for XOR-k, h(noise_p) for HMM-k."""
    if spec.family == "xor":
        return 0.0
    p = spec.noise_p
    if p in (0.0, 1.0):
        return 0.0
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)
