"""Seeded counter-based random streams.

Every random draw in the package comes from a Philox generator keyed by a
64-bit seed and a tuple of stream indices (worker, grid point, ...).  Two
calls with the same key produce the same stream; distinct keys give
statistically independent streams.
"""

import numpy as np

SEED_MASK = (1 << 64) - 1


def stream(seed, *key):
    """Return a ``numpy.random.Generator`` for ``(seed, *key)``.

    Parameters
    ----------
    seed : int
        Master seed, reduced modulo 2**64.
    *key : int
        Stream path, e.g. ``(worker,)`` or ``(point, worker)``.
    """
    ss = np.random.SeedSequence(int(seed) & SEED_MASK, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def split_counts(n, workers):
    """Split ``n`` items into ``workers`` contiguous chunk sizes (first chunks larger)."""
    workers = max(1, min(int(workers), int(n))) if n > 0 else 1
    base, extra = divmod(int(n), workers)
    return [base + (1 if i < extra else 0) for i in range(workers)]
