"""Order-preserving map over independent jobs, optionally in worker processes."""

import os
from concurrent.futures import ProcessPoolExecutor

WORKERS_ENV = "KOLMOSPHERE_WORKERS"


def worker_count(default=1):
    """Worker count from ``$KOLMOSPHERE_WORKERS`` (positive integer)."""
    raw = os.environ.get(WORKERS_ENV, "").strip()
    if not raw:
        return default
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ValueError(f"{WORKERS_ENV} must be a positive integer, got {raw!r}")
    return n


def pmap(fn, items, workers=None):
    """``[fn(x) for x in items]``; results come back in input order."""
    items = list(items)
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as ex:
        return list(ex.map(fn, items))
