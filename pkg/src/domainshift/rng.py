"""Deterministic seeding helpers.

All shuffles, splits, and weight draws in the toolkit are keyed through
mix64(), a splitmix64-style finalizer folded over the key parts (integers
or strings).  The resulting 64-bit key feeds a counter-based Philox
generator, so identical keys give identical streams on any machine.
"""

import numpy as np

_MASK = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    x ^= x >> 30
    x = (x * 0xBF58476D1CE4E5B9) & _MASK
    x ^= x >> 27
    x = (x * 0x94D049BB133111EB) & _MASK
    x ^= x >> 31
    return x


def _fnv1a64(s: str) -> int:
    h = 0xCBF29CE484222325
    for byte in s.encode("utf-8"):
        h ^= byte
        h = (h * 0x100000001B3) & _MASK
    return h


def mix64(*parts) -> int:
    """Fold integers / strings into a single 64-bit key."""
    acc = 0
    for p in parts:
        if isinstance(p, str):
            p = _fnv1a64(p)
        elif isinstance(p, (int, np.integer)):
            p = int(p) & _MASK
        else:
            raise TypeError(f"mix64 accepts ints and strings, got {type(p)!r}")
        acc = _splitmix64(acc ^ p)
    return acc


def generator(*parts) -> np.random.Generator:
    """Counter-based generator keyed on the mixed parts."""
    return np.random.Generator(np.random.Philox(key=mix64(*parts)))
