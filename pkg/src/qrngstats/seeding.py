"""Deterministic seed derivation for chunked / parallel simulation."""
from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def splitmix64(value: int) -> int:
    """One round of the SplitMix64 finalizer (a 64-bit bijective mix)."""
    z = (value + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def chunk_seed(master_seed: int, chunk_index: int) -> int:
    """Seed for chunk ``chunk_index``: ``splitmix64(master_seed XOR chunk_index)``."""
    return splitmix64((int(master_seed) & _MASK64) ^ int(chunk_index))


def make_rng(master_seed: int, chunk_index: int = 0, stream: int = 0) -> np.random.Generator:
    """Generator for one chunk; ``stream`` separates independent consumers of one seed."""
    seed = chunk_seed(master_seed, chunk_index)
    if stream:
        seed = splitmix64(seed ^ splitmix64(stream))
    return np.random.Generator(np.random.PCG64(seed))
