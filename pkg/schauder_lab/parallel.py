"""Ordered parallel map used by the Monte Carlo loops.

Results always come back in input order, so every reduction over paths is a
reduction over a path-index-ordered sequence and does not depend on how many
worker threads ran.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, Sequence, TypeVar

from schauder_lab.logging_config import get_logger

logger = get_logger(__name__)

THREADS_ENV = "SCHAUDER_LAB_THREADS"

T = TypeVar("T")
R = TypeVar("R")


def thread_count() -> int:
    """Number of worker threads from ``SCHAUDER_LAB_THREADS`` (default 1)."""
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        count = int(raw)
    except ValueError:
        logger.warning(f"Ignoring non-integer {THREADS_ENV}={raw!r}; using 1 thread")
        return 1
    return max(1, count)


def ordered_map(fn: Callable[[T], R], items: Iterable[T], threads: Optional[int] = None) -> List[R]:
    """Apply ``fn`` to every item and return the results in input order."""
    items = list(items)
    workers = thread_count() if threads is None else max(1, threads)
    if workers == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def path_chunks(n_paths: int, chunk_size: int) -> List[Sequence[int]]:
    """Split ``range(n_paths)`` into consecutive index ranges."""
    return [range(start, min(start + chunk_size, n_paths)) for start in range(0, n_paths, chunk_size)]
