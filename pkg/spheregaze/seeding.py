"""
Seed derivation.

Every random stream in the package comes from one unsigned 64-bit seed. A
stream name is hashed into the seed with splitmix64 so independent consumers
(initialisation, shuffling, dropout, per-scene generation) never share state.
"""

import zlib

import numpy as np

MASK64 = (1 << 64) - 1


def splitmix64(state: int) -> int:
    """One splitmix64 output for ``state`` (state is advanced by the golden gamma)."""
    z = (state + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, stream: str, index: int = 0) -> int:
    """Independent 64-bit seed for (stream, index) under ``seed``."""
    tag = zlib.crc32(stream.encode("utf-8"))
    return splitmix64(splitmix64(splitmix64(seed & MASK64) ^ tag) ^ (index & MASK64))


def make_rng(seed: int, stream: str, index: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(seed, stream, index)))
