"""Parallel replication loop with per-replication streams and ordered merge."""

from __future__ import annotations

import logging
import time
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from selrand.errors import SelrandError
from selrand.samplers.streams import Seed, child

logger = logging.getLogger(__name__)

Replication = Callable[[int, np.random.SeedSequence], list[dict]]


def run_replications(
    fn: Replication,
    reps: int,
    seed: Seed,
    *,
    threads: int = 1,
    label: str = "replication",
    start: int = 0,
) -> list[dict]:
    """Run ``fn(index, stream)`` for indices start..start+reps-1; rows come back in index order.

    A replication that raises a SelrandError contributes one flagged row
    (``failed=True``, ``error=<code>``) and the loop carries on.
    """
    if reps < 1:
        raise ValueError("reps must be at least 1")

    def one(index: int) -> list[dict]:
        stream = child(seed, label, index)
        try:
            rows = fn(index, stream)
        except SelrandError as exc:
            logger.warning("%s %d failed: %s: %s", label, index, exc.code, exc.message)
            return [{"replication": index, "failed": True, "error": exc.code}]
        for row in rows:
            row.setdefault("replication", index)
            row.setdefault("failed", False)
            row.setdefault("error", None)
        return rows

    started = time.perf_counter()
    with ThreadPoolExecutor(max_workers=max(threads, 1)) as pool:
        batches = list(pool.map(one, range(start, start + reps)))
    rows = [row for batch in batches for row in batch]
    failed = sum(1 for batch in batches if batch and batch[0].get("failed"))
    logger.info(
        "%d %ss finished in %.1fs (%d flagged)",
        reps,
        label,
        time.perf_counter() - started,
        failed,
    )
    return rows


def timed(fn: Callable[[], object]) -> tuple[object, float]:
    """Result of ``fn()`` and its wall time in seconds."""
    started = time.perf_counter()
    result = fn()
    return result, time.perf_counter() - started
