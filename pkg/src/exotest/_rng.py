"""Keyed random substreams.

Every random quantity is drawn from a Philox generator keyed by the
master seed and a tuple of integer tags (stream kind, cell, replication,
chunk). Results therefore do not depend on evaluation order or on the
number of worker threads.
"""

import numpy as np

# stream kinds
DESIGN = 1  # fixed design draws (X2)
DATA = 2  # per-replication structural errors
MC = 3  # Monte Carlo null draws
TIES = 4  # tie-breaking uniforms
POWER = 5  # noncentral chi-square draws

MASK64 = (1 << 64) - 1


def substream(seed, *tags):
    """Generator for ``(seed, *tags)``; tags are non-negative integers."""
    seed = int(seed)
    if seed < 0:
        raise ValueError("seed must be non-negative")
    key = [seed & MASK64, seed >> 64, *(int(t) for t in tags)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))
