"""Deterministic RNG stream derivation.

Every random draw in the package comes from a generator keyed by
``(master_seed, purpose, *indices)``. Streams never depend on scheduling
order, so parallel and serial execution consume identical draws.
"""

import numpy as np

NULL = 1
PARTITION = 2
DATA = 3
HARNESS = 4


def stream(seed, purpose, *indices):
    """Return a fresh ``Generator`` for the given key."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(purpose), *map(int, indices)))
    return np.random.default_rng(ss)


def null_stream(seed, replicate=0, block=0):
    # KCI uses (0, 0) so that a single-block, single-replicate FastKCI run
    # draws exactly the same null samples.
    return stream(seed, NULL, replicate, block)


def partition_stream(seed, replicate):
    return stream(seed, PARTITION, replicate)


def data_stream(seed, *indices):
    return stream(seed, DATA, *indices)


def derive_seed(seed, *indices):
    """A 64-bit seed hashed from a master seed and replicate indices."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(HARNESS, *map(int, indices)))
    return int(ss.generate_state(1, np.uint64)[0])
