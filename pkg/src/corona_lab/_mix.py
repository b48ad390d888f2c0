"""Deterministic 64-bit integer mixing.

The finalizer is SplitMix64 (Steele, Lea, Flood 2014).  Everything that
needs reproducible pseudo-randomness keyed by a point id goes through here,
so reports do not depend on numpy's generator versions.
"""
import numpy as np

_MASK = (1 << 64) - 1


def mix64(x: int) -> int:
    """SplitMix64 finalizer on a Python int, result in [0, 2**64)."""
    z = (x + 0x9E3779B97F4A7C15) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def mix64_array(ids, seed: int = 0) -> np.ndarray:
    """Vectorized ``mix64(id ^ mix64(seed))`` as uint64."""
    key = np.uint64(mix64(seed))
    z = np.asarray(ids, dtype=np.uint64) ^ key
    with np.errstate(over="ignore"):
        z = z + np.uint64(0x9E3779B97F4A7C15)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def hash_sign(ids, seed: int = 0) -> np.ndarray:
    """+1/-1 per id from the low bit of the mixed value."""
    bits = mix64_array(ids, seed) & np.uint64(1)
    return np.where(bits == 1, 1.0, -1.0)


def hash_uniform(ids, seed: int = 0) -> np.ndarray:
    """Uniform floats in [0, 1) from the top 53 bits."""
    return (mix64_array(ids, seed) >> np.uint64(11)).astype(np.float64) / float(1 << 53)
