"""Seed handling.

Every random draw in the package comes from a ``numpy.random.Generator``
built from ``SeedSequence(master, spawn_key=key)``.  Keys name the role of
a stream (and the replication it belongs to), so adding a new consumer
never shifts the draws of an existing one.
"""

import os

import numpy as np

ENV_SEED = "SEQSAMPLE_SEED"

# stream roles
DATA = 0
SHUFFLE_ASSIGN = 1
SHUFFLE_PERMUTE = 2
SHUFFLE_WITHIN = 3
SAMPLE = 4


def stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


def sub_seed(seed: int, *key: int) -> int:
    """A plain integer seed derived from ``(seed, key)``."""
    ss = np.random.SeedSequence(seed, spawn_key=tuple(key))
    return int(ss.generate_state(2, dtype=np.uint32).view(np.uint64)[0] >> 1)


def resolve_seed(seed=None) -> int:
    """Flag value, then ``$SEQSAMPLE_SEED``, then fresh OS entropy."""
    if seed is not None:
        return int(seed)
    env = os.environ.get(ENV_SEED)
    if env not in (None, ""):
        return int(env)
    return int(np.random.SeedSequence().entropy % (2**63))
