"""Deterministic per-task random streams.

Every random draw in the toolkit comes from ``rng(master_seed, *stream)``.
Streams are keyed by integers (fold index, replicate index, ...) so results
do not depend on the order in which tasks are scheduled.
"""

import numpy as np


def rng(seed, *stream):
    """Counter-based (Philox) generator for the stream ``(seed, *stream)``."""
    key = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [int(s) for s in stream]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))


def derive_seed(seed, *stream):
    """A 64-bit integer seed for a sub-task, mixed from the master seed."""
    key = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [int(s) for s in stream]
    state = np.random.SeedSequence(key).generate_state(2, dtype=np.uint32)
    return int(state[0]) | (int(state[1]) << 32)
