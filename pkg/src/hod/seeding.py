"""Seed derivation tree.

One u64 run seed fans out into child seeds with splitmix64, so every
component (scenario noise, weight init, bootstrap draws, tree feature
subsets) gets an independent, reproducible stream::

    derive_seed(run_seed, "forest", 7)   # seed of tree 7
"""
import zlib

_MASK = (1 << 64) - 1


def splitmix64(x):
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def _token(part):
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    return int(part) & _MASK


def derive_seed(seed, *path):
    """Child seed for ``path`` under ``seed``; stable across runs and platforms."""
    state = splitmix64(int(seed) & _MASK)
    for part in path:
        state = splitmix64(state ^ _token(part))
    return state
