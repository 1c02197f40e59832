"""
Parallel Utilities
Fixed-size chunking of per-observation work over a thread pool
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional

import numpy as np

logger = logging.getLogger(__name__)

# Chunk boundaries never depend on the worker count, so every chunk runs the
# same array operations and results are bit-identical for any thread setting.
CHUNK_ROWS = 1024

_max_workers: Optional[int] = None


def set_max_workers(workers: Optional[int]) -> None:
    """Cap the worker count used when callers do not pass one"""
    global _max_workers
    if workers is not None and workers < 1:
        raise ValueError("worker count must be at least 1")
    _max_workers = workers


def default_workers() -> int:
    if _max_workers is not None:
        return _max_workers
    return os.cpu_count() or 1


def chunk_slices(n: int, chunk: int = CHUNK_ROWS) -> List[slice]:
    return [slice(start, min(start + chunk, n)) for start in range(0, n, chunk)]


def map_chunks(func: Callable[[slice], np.ndarray], n: int,
               workers: Optional[int] = None) -> np.ndarray:
    """Apply `func` to consecutive row slices and concatenate in row order"""
    slices = chunk_slices(n)
    if not slices:
        return np.zeros(0)
    workers = default_workers() if workers is None else workers
    if workers <= 1 or len(slices) == 1:
        parts = [func(s) for s in slices]
    else:
        with ThreadPoolExecutor(max_workers=min(workers, len(slices))) as pool:
            parts = list(pool.map(func, slices))
    return np.concatenate(parts)
