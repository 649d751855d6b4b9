"""Deterministic data-parallel sweeps.

Work is split into fixed-size chunks whose boundaries depend only on the data,
never on the worker count, and partial results are concatenated in chunk
order.  Outputs are therefore bit-identical for any thread count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

ENV_THREADS = "LATTICETAILS_THREADS"
DEFAULT_CHUNK = 8192


def default_threads() -> int:
    value = os.environ.get(ENV_THREADS)
    if value is None:
        return 1
    try:
        return max(1, int(value))
    except ValueError:
        return 1


def chunked_apply(fn, array: np.ndarray, threads: int = 1,
                  chunk: int = DEFAULT_CHUNK) -> list:
    """Apply fn to fixed-size row chunks of `array`, preserving chunk order."""
    n = len(array)
    chunks = [array[i:i + chunk] for i in range(0, n, chunk)]
    if threads <= 1 or len(chunks) <= 1:
        return [fn(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, chunks))


def chunked_concat(fn, array: np.ndarray, threads: int = 1,
                   chunk: int = DEFAULT_CHUNK) -> np.ndarray:
    parts = chunked_apply(fn, array, threads=threads, chunk=chunk)
    return np.concatenate(parts, axis=0)
