"""Named random streams derived from a single master seed.

Each logical source of randomness (memberships, covariates, edge noise,
sample splits, k-means restarts, Monte Carlo replications) gets its own
child stream so that changing one component, or the node count, never
reshuffles the draws of the others.
"""

from __future__ import annotations

import numpy as np

# Stable stream identifiers; never reorder or reuse numbers.
STREAMS = {
    "membership": 1,
    "alpha": 2,
    "covariates": 3,
    "edges": 4,
    "split": 5,
    "kmeans": 6,
    "replication": 7,
}


def stream_rng(master_seed: int, name: str, index: int = 0) -> np.random.Generator:
    """Generator for the named substream of ``master_seed``.

    ``index`` distinguishes repeated uses of the same stream (split r,
    replication r, ...).
    """
    try:
        key = STREAMS[name]
    except KeyError:
        raise KeyError(f"unknown RNG stream {name!r}") from None
    ss = np.random.SeedSequence(master_seed, spawn_key=(key, index))
    return np.random.default_rng(ss)


def replication_seed(master_seed: int, rep: int) -> int:
    """Derived 63-bit master seed for one Monte Carlo replication."""
    ss = np.random.SeedSequence(master_seed, spawn_key=(STREAMS["replication"], rep))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> 1)
