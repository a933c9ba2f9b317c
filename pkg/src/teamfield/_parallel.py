"""Ordered worker pools.

Results always come back in submission order and every reduction happens
sequentially afterwards, so outputs are byte-identical for any worker
count. TEAMFIELD_THREADS caps the pool; 0 or unset picks a small default.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def worker_count() -> int:
    raw = os.environ.get("TEAMFIELD_THREADS", "0").strip()
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n < 0:
        n = 0
    if n == 0:
        return min(4, os.cpu_count() or 1)
    return n


def run_ordered(fn, items, workers: int | None = None) -> list:
    items = list(items)
    if workers is None:
        workers = worker_count()
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
