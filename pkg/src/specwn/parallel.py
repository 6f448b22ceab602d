"""Deterministic parallel map over path indices."""

import os
from concurrent.futures import ThreadPoolExecutor


def worker_count(threads=None):
    """Worker count from the argument, ``SPECWN_THREADS`` or 1."""
    if threads is None:
        env = os.environ.get("SPECWN_THREADS", "")
        threads = int(env) if env.strip() else 1
    return max(1, int(threads))


def parallel_map(fn, n, threads=None, chunk=64):
    """``[fn(0), ..., fn(n - 1)]`` computed on a thread pool.

    Items are grouped in fixed chunks and reassembled in index order, so the
    result is independent of the number of workers.
    """
    workers = worker_count(threads)
    if workers == 1 or n <= 1:
        return [fn(i) for i in range(n)]
    bounds = [(lo, min(n, lo + chunk)) for lo in range(0, n, chunk)]

    def run(b):
        return [fn(i) for i in range(*b)]

    with ThreadPoolExecutor(max_workers=workers) as ex:
        parts = list(ex.map(run, bounds))
    return [x for part in parts for x in part]
