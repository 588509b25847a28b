"""Named random substreams derived from one root seed.

Every source of randomness in a run (data generation, parameter init,
dropout, patch placement, shuffling) draws from its own PCG64 generator,
keyed by (root_seed, stream id, index). Components can therefore be varied
independently and any single stream replayed bit-exactly.
"""

import numpy as np

STREAMS = {
    "data_train": 0,
    "data_test": 1,
    "init": 2,
    "dropout": 3,
    "patches": 4,
    "shuffle": 5,
    "gradcheck": 6,
    "eval": 7,
    "permute": 8,
    "bench": 9,
}


def stream_rng(root_seed, name, index=0):
    """Generator for the named substream of `root_seed`."""
    if name not in STREAMS:
        raise KeyError(f"unknown rng stream {name!r}; known: {sorted(STREAMS)}")
    seq = np.random.SeedSequence((int(root_seed), STREAMS[name], int(index)))
    return np.random.default_rng(seq)


def stream_seed(root_seed, name, index=0):
    """A plain integer seed derived from the named substream (for recording)."""
    return int(stream_rng(root_seed, name, index).integers(0, 2**63 - 1))
