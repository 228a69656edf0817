"""Replica scheduling: a small deterministic thread pool.

Replicas are independent chains with derived seeds; results merge in
replica order regardless of completion order, so the worker count never
changes the output.  The compiled kernels release the GIL, making threads
effective.  TORWALK_WORKERS sets the default pool size.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("TORWALK_WORKERS", "1")))
    except ValueError:
        return 1


def run_replicas(task, n_replicas: int, workers: int | None = None) -> list:
    """Evaluate task(replica_index) for each replica, ordered by index."""
    if workers is None:
        workers = default_workers()
    if workers <= 1 or n_replicas <= 1:
        return [task(r) for r in range(n_replicas)]
    with ThreadPoolExecutor(max_workers=min(workers, n_replicas)) as pool:
        return list(pool.map(task, range(n_replicas)))
