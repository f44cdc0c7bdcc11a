"""Process-pool map that shares large read-only context through fork."""

from __future__ import annotations

import multiprocessing
import os
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Callable, Sequence

_CONTEXT: tuple[Callable, Any] | None = None


def _call(item):
    fn, ctx = _CONTEXT
    return fn(ctx, item)


def resolve_jobs(jobs: int | None) -> int:
    if jobs is None or jobs <= 0:
        return os.cpu_count() or 1
    return jobs


def parallel_map(fn: Callable[[Any, Any], Any], ctx: Any, items: Sequence[Any], jobs: int | None = 1) -> list:
    """``[fn(ctx, item) for item in items]``, fanned out over ``jobs`` forked workers.

    ``ctx`` is inherited by the workers instead of pickled; items and results
    must be picklable. Output order follows ``items`` so results never depend
    on the worker count.
    """
    global _CONTEXT
    jobs = min(resolve_jobs(jobs), len(items))
    if jobs <= 1 or "fork" not in multiprocessing.get_all_start_methods():
        return [fn(ctx, item) for item in items]
    _CONTEXT = (fn, ctx)
    try:
        with ProcessPoolExecutor(jobs, mp_context=multiprocessing.get_context("fork")) as pool:
            return list(pool.map(_call, items))
    finally:
        _CONTEXT = None
