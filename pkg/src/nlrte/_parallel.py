"""Worker-pool helper with a deterministic, order-preserving reduction."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def worker_count(n_tasks: int) -> int:
    """Workers to use: NLRTE_THREADS caps, hardware bounds, tasks bound."""
    env = os.environ.get("NLRTE_THREADS", "")
    try:
        cap = int(env) if env else min(4, os.cpu_count() or 1)
    except ValueError:
        cap = 1
    return max(1, min(cap, n_tasks))


def ordered_map(fn, items):
    """Map preserving input order; threads only when they can help.

    The numerical kernels release the GIL (numba nogil, BLAS, FFT), so
    thread pools give real concurrency for independent runs; results are
    always reduced in input order for reproducibility.
    """
    items = list(items)
    workers = worker_count(len(items))
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
