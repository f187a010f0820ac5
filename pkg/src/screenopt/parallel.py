"""Order-preserving parallel map used by the worker pools.

Results must never depend on the worker count: inputs are prepared up
front, mapped in submission order, and merged positionally; ``workers``
only controls how many evaluations run at once.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def chunked_map(fn: Callable[[T], R], items: Sequence[T], workers: int = 1) -> list[R]:
    """Apply ``fn`` to every item, preserving input order exactly."""
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def chunk_ranges(total: int, chunk_size: int) -> list[tuple[int, int]]:
    """Split ``range(total)`` into contiguous [start, stop) windows."""
    if chunk_size <= 0:
        raise ValueError("chunk_size must be positive")
    return [(lo, min(lo + chunk_size, total)) for lo in range(0, total, chunk_size)]
