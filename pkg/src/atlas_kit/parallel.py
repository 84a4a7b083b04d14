"""Worker-count control for the embarrassingly parallel inner loops.

Fit starts and forest trees are independent work units whose reductions are
ordered by index, so results are identical at any worker count. The
ATLAS_KIT_THREADS environment variable caps the thread pool; the default is
serial execution.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def worker_count() -> int:
    raw = os.environ.get("ATLAS_KIT_THREADS", "")
    try:
        value = int(raw)
    except ValueError:
        return 1
    return max(1, value)


def ordered_map(fn: Callable[[T], R], items: Sequence[T]) -> list[R]:
    """Apply fn to every item, preserving input order in the results."""
    workers = worker_count()
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
