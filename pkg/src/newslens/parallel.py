"""Deterministic parallel map: results always merge in input order."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor


def chunked_map(fn, items, threads: int = 1) -> list:
    items = list(items)
    if threads <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
