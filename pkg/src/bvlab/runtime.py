"""Thread-pool plumbing honoring the BV_THREADS environment variable.

Parallel sections reduce their results in index order, so output never
depends on the worker count.
"""
from __future__ import annotations

import os
import threading
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")

_DEFAULT_WORKERS = 4


def worker_count() -> int:
    """Parallelism cap: BV_THREADS if set, else min(4, cpu count)."""
    raw = os.environ.get("BV_THREADS", "")
    if raw.strip():
        try:
            n = int(raw)
        except ValueError:
            raise ValueError(f"BV_THREADS must be an integer, got {raw!r}") from None
        return max(1, n)
    return max(1, min(_DEFAULT_WORKERS, os.cpu_count() or 1))


def parallel_map(fn: Callable[[T], R], items: Sequence[T]) -> list[R]:
    """Map ``fn`` over ``items``; results are returned in input order."""
    items = list(items)
    workers = min(worker_count(), len(items)) or 1
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def serialized(fn: Callable[..., R]) -> Callable[..., R]:
    """Wrap a callable so concurrent invocations are executed one at a time.

    Use for trainers that are not safe to call from multiple threads.
    """
    lock = threading.Lock()

    def wrapper(*args, **kwargs):
        with lock:
            return fn(*args, **kwargs)

    return wrapper
