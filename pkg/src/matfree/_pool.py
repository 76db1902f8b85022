"""Shared worker-thread pools standing in for MPI ranks."""

from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor

import numpy as np

_pools: dict[int, ThreadPoolExecutor] = {}
_lock = threading.Lock()


def get_pool(workers):
    with _lock:
        pool = _pools.get(workers)
        if pool is None:
            pool = ThreadPoolExecutor(max_workers=workers, thread_name_prefix="matfree")
            _pools[workers] = pool
        return pool


def split_range(n, parts):
    """Contiguous ``(start, stop)`` chunks covering ``range(n)``."""
    edges = np.linspace(0, n, min(parts, max(n, 1)) + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def run_chunks(fn, n, workers):
    """Call ``fn(start, stop)`` over ``range(n)`` split across ``workers`` threads."""
    chunks = split_range(n, workers)
    if workers <= 1 or len(chunks) <= 1:
        for a, b in chunks:
            fn(a, b)
        return
    futures = [get_pool(workers).submit(fn, a, b) for a, b in chunks]
    for f in futures:
        f.result()
