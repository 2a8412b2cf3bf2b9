"""Splittable seeding.

One global seed fans out to per-run seeds through SeedSequence spawn
keys, so run i gets the same seeds no matter how many runs exist or in
what order they execute.
"""

from __future__ import annotations

import numpy as np


def chain_seeds(global_seed, index, n=1):
    """Derive n stable 64-bit seeds for run `index` under `global_seed`."""
    if index < 0:
        raise ValueError(f"run index must be >= 0, got {index}")
    if n < 1:
        raise ValueError(f"need at least one seed, got {n}")
    seq = np.random.SeedSequence(global_seed, spawn_key=(index,))
    return [int(v) for v in seq.generate_state(n, dtype=np.uint64)]
