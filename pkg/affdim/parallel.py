"""Ordered thread-pool map used by the numerical kernels.

Work is always split into the same chunks regardless of the thread count and
results come back in chunk order, so reductions are bit-identical for any
number of threads.
"""
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, Sequence, Tuple, TypeVar

import affdim.config as config

T = TypeVar("T")
R = TypeVar("R")


def resolve_threads(threads: Optional[int] = None) -> int:
    """Return the effective worker count (argument, then AFFDIM_THREADS)."""
    value = config.THREADS if threads is None else threads
    return max(1, int(value))


def ordered_map(fn: Callable[[T], R], items: Iterable[T], threads: Optional[int] = None) -> List[R]:
    """Apply ``fn`` to every item, preserving input order."""
    items = list(items)
    workers = min(resolve_threads(threads), len(items))
    if workers <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def chunk_ranges(total: int, chunk_size: Optional[int] = None) -> Sequence[Tuple[int, int, int]]:
    """Split ``range(total)`` into (chunk_index, start, stop) triples."""
    size = chunk_size or config.CHUNK_SIZE
    return [(k, start, min(start + size, total)) for k, start in enumerate(range(0, total, size))]
