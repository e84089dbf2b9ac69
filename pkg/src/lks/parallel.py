"""Deterministic replicate-block parallelism.

Work is partitioned into fixed-size consecutive blocks independent of the
thread count, and results are reduced in block order, so outputs are
bit-identical for any number of threads.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def thread_count(requested: int | None = None) -> int:
    if requested is not None and requested > 0:
        return requested
    env = os.environ.get("LKS_THREADS")
    if env:
        try:
            n = int(env)
            if n > 0:
                return n
        except ValueError:
            pass
    return 1


def partition_blocks(items, block_size: int) -> list[tuple]:
    items = tuple(items)
    return [items[i : i + block_size] for i in range(0, len(items), block_size)]


def map_blocks(fn, items, block_size: int = 64, threads: int = 1) -> list:
    """Apply fn to consecutive blocks of items; results in block order."""
    blocks = partition_blocks(items, block_size)
    threads = thread_count(threads)
    if threads <= 1 or len(blocks) <= 1:
        return [fn(b) for b in blocks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(fn, b) for b in blocks]
        return [f.result() for f in futures]
