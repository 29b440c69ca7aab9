"""Deterministic block-parallel map.

Work is split into fixed-size blocks that do not depend on the worker count;
per-block results are combined in block order, so any ``workers`` value
yields identical output for a fixed seed.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor

__all__ = ["map_blocks"]


def map_blocks(fn, tasks: list, workers: int = 1) -> list:
    """Apply ``fn`` to each task, in order, optionally across processes.

    ``fn`` must be a module-level function (picklable) and tasks must encode
    their own block boundaries; results are returned in task order.
    """
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))
