"""Deterministic RNG derivation.

All randomness in the package flows from one master seed. A stream for
any purpose is derived as ``SeedSequence([master, crc32(label), ...])``,
so streams are independent of each other and of iteration order: chain
17 gets the same draws whether 10 or 1000 chains run, and adding a new
labelled stream never shifts an existing one.
"""

from __future__ import annotations

import zlib

import numpy as np


def _code(part) -> int:
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError("seed path integers must be non-negative")
        return int(part)
    return zlib.crc32(str(part).encode("utf-8"))


def seed_sequence(master: int, *path) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(master)] + [_code(p) for p in path])


def rng_for(master: int, *path) -> np.random.Generator:
    """A PCG64 generator for the stream named by ``path`` parts."""
    return np.random.Generator(np.random.PCG64(seed_sequence(master, *path)))
