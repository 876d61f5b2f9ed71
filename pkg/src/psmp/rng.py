"""Named, splittable random streams.

Every stochastic routine takes an explicit seed or Generator. Streams are
derived from a root seed plus a tuple of names, so adding a new consumer never
shifts the draws of an existing one.
"""
from __future__ import annotations

import zlib

import numpy as np


def _key(name) -> int:
    if isinstance(name, (int, np.integer)):
        return int(name) & 0xFFFFFFFF
    return zlib.crc32(str(name).encode("utf-8"))


def stream(seed, *names) -> np.random.Generator:
    """Return an independent Generator for ``(seed, *names)``."""
    if isinstance(seed, np.random.Generator):
        if not names:
            return seed
        # derive a child deterministically from the parent's next draw
        seed = int(seed.integers(0, 2**63 - 1))
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_key(n) for n in names))
    return np.random.Generator(np.random.PCG64(ss))
