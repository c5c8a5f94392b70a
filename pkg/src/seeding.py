"""
Deterministic chunked seeding for the Monte Carlo kernels

Samples are cut into fixed chunks; chunk k always draws from
numpy.random.default_rng([seed, k]) no matter which thread runs it, and chunk
results come back in chunk order. Results therefore depend on (seed, n) only,
never on the worker count.
"""

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from tqdm import tqdm

CHUNK_SIZE = 1024
THREADS_ENV = "CONEBOOK_THREADS"


def worker_count(threads=None):
    if threads is not None:
        return max(1, int(threads))
    value = os.environ.get(THREADS_ENV, "").strip()
    if value:
        return max(1, int(value))
    return os.cpu_count() or 1


def chunk_bounds(n, chunk_size=CHUNK_SIZE):
    return [(start, min(n, start + chunk_size)) for start in range(0, n, chunk_size)]


def chunk_rng(seed, k):
    return np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, int(k)])


def run_chunked(n, seed, kernel, threads=None, desc=None, chunk_size=CHUNK_SIZE):
    """
    Run kernel(rng, start, stop) over all chunks of range(n).

    Returns the list of per-chunk results in chunk order.
    """
    bounds = chunk_bounds(n, chunk_size)

    def job(k):
        start, stop = bounds[k]
        return kernel(chunk_rng(seed, k), start, stop)

    workers = min(worker_count(threads), max(1, len(bounds)))
    if workers == 1:
        return [job(k) for k in tqdm(range(len(bounds)), desc=desc, disable=None, leave=False)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(tqdm(pool.map(job, range(len(bounds))), total=len(bounds),
                         desc=desc, disable=None, leave=False))
