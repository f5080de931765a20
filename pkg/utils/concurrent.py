"""Generic concurrent execution utilities.

Provides a thread-pool-based ``run_concurrent`` helper used to evaluate
independent work items (benchmark assets, scoring jobs) in parallel.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor, as_completed
from typing import Callable, Iterable, TypeVar

from loguru import logger

T = TypeVar('T')
R = TypeVar('R')


def run_concurrent(
    items: Iterable[T],
    func: Callable[[T], R],
    *,
    max_workers: int = 5,
    progress: Callable[[int, int, T], None] | None = None,
) -> list[R | None]:
    """Execute *func* on every item concurrently, returning results in the
    original order.

    Args:
        items: Iterable of inputs to process.
        func: Callable that takes a single item and returns a result.
        max_workers: Maximum number of parallel threads. ``1`` runs the items
            inline in the calling thread, which keeps single-job runs free of
            pool overhead.
        progress: Optional callback ``(completed, total, item)`` called after
            each item finishes.

    Returns:
        A list of results in the same order as *items*.  If *func* raises an
        exception for an item, the error is logged and the slot is ``None``.
    """
    item_list = list(items)
    total = len(item_list)
    if total == 0:
        return []

    results: list[R | None] = [None] * total

    if max_workers <= 1:
        for idx, item in enumerate(item_list):
            try:
                results[idx] = func(item)
            except Exception as e:
                logger.error(f"error processing {item}: {e}")
            if progress:
                progress(idx + 1, total, item)
        return results

    completed = 0
    with ThreadPoolExecutor(max_workers=min(max_workers, total)) as pool:
        future_to_idx = {
            pool.submit(func, item): (idx, item)
            for idx, item in enumerate(item_list)
        }
        for future in as_completed(future_to_idx):
            idx, item = future_to_idx[future]
            try:
                results[idx] = future.result()
            except Exception as e:
                logger.error(f"error processing {item}: {e}")
                results[idx] = None

            completed += 1
            if progress:
                progress(completed, total, item)

    return results
