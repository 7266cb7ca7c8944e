"""Deterministic chunked fan-out for batch evaluations.

Work is always split into fixed-size chunks and reassembled in submission
order, so numeric results are identical for any worker count; threads only
change wall time.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

CHUNK_ROWS = 4096

_n_threads = 1


def set_threads(n):
    global _n_threads
    if n < 1:
        raise ValueError(f"thread count must be >= 1, got {n}")
    _n_threads = int(n)


def get_threads():
    return _n_threads


def map_chunked(fn, n_rows):
    """Evaluate fn(lo, hi) over fixed [lo, hi) chunks and concatenate.

    fn must return a 1-d array for its row range and be safe to call from
    worker threads.
    """
    if n_rows == 0:
        return np.zeros(0, dtype=np.complex128)
    bounds = [(lo, min(lo + CHUNK_ROWS, n_rows)) for lo in range(0, n_rows, CHUNK_ROWS)]
    if _n_threads == 1 or len(bounds) == 1:
        parts = [fn(lo, hi) for lo, hi in bounds]
    else:
        with ThreadPoolExecutor(max_workers=_n_threads) as pool:
            futures = [pool.submit(fn, lo, hi) for lo, hi in bounds]
            parts = [f.result() for f in futures]
    return np.concatenate(parts)
