"""Deterministic seed derivation.

Every random stream in the package is obtained from a single master seed
through :class:`numpy.random.SeedSequence`, whose ``spawn_key`` mechanism
hashes ``(master_seed, *keys)`` into an independent 64-bit stream seed.
Replicate ``r`` of a Monte Carlo run therefore uses
``derive_seed(master, STREAM_REPLICATE, r)`` regardless of the order in which
workers process replicates.
"""
import numpy as np

STREAM_REPLICATE = 0
STREAM_NETWORK = 1
STREAM_FOLD = 2
STREAM_EPOCH = 3
STREAM_DATA = 4
STREAM_HEAD = 5


def derive_seed(master, *keys):
    """Return a 64-bit integer seed mixed from ``master`` and integer ``keys``."""
    ss = np.random.SeedSequence(entropy=int(master) & (2**64 - 1),
                                spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def rng_for(master, *keys):
    return np.random.default_rng(derive_seed(master, *keys))
