"""Counter-based random streams.

Every stochastic routine draws from ``Philox`` keyed by ``(master_seed, index)``
through ``SeedSequence`` spawn keys, so stream ``i`` is the same no matter which
worker runs it or in what order.
"""
from __future__ import annotations

import numpy as np


def stream(seed: int, *index: int) -> np.random.Generator:
    """Independent generator for ``(seed, *index)``."""
    if seed < 0 or seed >= 2**64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(i) for i in index))
    return np.random.Generator(np.random.Philox(ss))
