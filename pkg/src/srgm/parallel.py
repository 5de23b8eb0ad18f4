"""Ordered map over replication indices, optionally on a process pool."""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from functools import partial

__all__ = ["map_reps", "resolve_threads"]


def resolve_threads(threads: int | None) -> int:
    if threads is None or threads <= 0:
        return os.cpu_count() or 1
    return int(threads)


def map_reps(func, reps, threads: int | None = 1, **kwargs) -> list:
    """Return ``[func(r, **kwargs) for r in range(reps)]``.

    With more than one worker the calls run in a process pool; results come
    back in replication order either way, so aggregation is deterministic.
    ``func`` must be a module-level function when ``threads > 1``.
    """
    call = partial(func, **kwargs)
    workers = min(resolve_threads(threads), max(int(reps), 1))
    if workers <= 1:
        return [call(r) for r in range(reps)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(call, range(reps), chunksize=max(1, reps // (4 * workers))))
