"""Seeded, splittable random streams.

Each replication draws from a Philox (counter-based) generator keyed by the
pair ``(master_seed, replication_index)``, so replications are reproducible
no matter which worker runs them or in what order.
"""
import numpy as np


def make_rng(seed=None, *stream):
    """Return a Philox-backed Generator for ``(seed, *stream)``.

    Passing an existing Generator returns it unchanged.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None:
        return np.random.Generator(np.random.Philox())
    key = [int(seed)] + [int(s) for s in stream]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))
