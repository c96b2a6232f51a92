"""Deterministic seed derivation.

Every source of randomness in the pipeline is seeded through :func:`mix64`,
which collapses a tuple such as ``(master_seed, participant, repeat, fold)``
into one 64-bit value. Streams derived from distinct tuples are independent,
so per-user, per-repeat, and per-tree work can run in any order (or in
parallel) and still reproduce the sequential result bit for bit.

The mix is a splitmix64 chain: each part is added to the running state and
passed through the splitmix64 output permutation. String parts are first
hashed with 64-bit FNV-1a. Both primitives are plain integer arithmetic, so
results are identical across platforms and Python versions.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1

_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a hash of a byte string."""
    h = _FNV_OFFSET
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & _MASK
    return h


def splitmix64(state: int) -> tuple[int, int]:
    """Advance a splitmix64 state; return ``(new_state, output)``."""
    state = (state + _GAMMA) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    z ^= z >> 31
    return state, z


def mix64(*parts: int | str) -> int:
    """Collapse seed parts into one 64-bit seed.

    Each part is XORed into the running state, which is then replaced by the
    splitmix64 output permutation of itself, so order matters:
    ``mix64(1, "a") != mix64("a", 1)``. Parts may be ints (taken mod 2**64)
    or strings (FNV-1a hashed).
    """
    if not parts:
        raise ValueError("mix64 needs at least one part")
    state = 0
    for part in parts:
        if isinstance(part, str):
            value = fnv1a64(part.encode("utf-8"))
        elif isinstance(part, (int, np.integer)):
            value = int(part) & _MASK
        else:
            raise TypeError(f"mix64 parts must be int or str, got {type(part)!r}")
        _, state = splitmix64(state ^ value)
    return state


def generator(*parts: int | str) -> np.random.Generator:
    """NumPy generator seeded from :func:`mix64` of the given parts."""
    return np.random.Generator(np.random.PCG64(mix64(*parts)))
