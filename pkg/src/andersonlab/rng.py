"""Deterministic per-realization random streams.

Realization ``i`` of a run with master seed ``s`` draws from
``PCG64(SeedSequence(entropy=s, spawn_key=(i,)))``.  SeedSequence hashes the
pair through its 32-bit mixing rounds, so streams are independent of the
order in which realizations are evaluated or of how they are split across
workers.
"""
from __future__ import annotations

import numpy as np

MAX_SEED = 2 ** 64 - 1


def check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed <= MAX_SEED:
        raise ValueError(f"master seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def stream(master_seed: int, index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=check_seed(master_seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.PCG64(ss))
