"""Rejection sampling from the selective randomization distribution.

Proposals are independent mechanism draws (pinned entries held fixed) and a
proposal is kept iff it lands in the reference set. Proposals are generated
in fixed-size chunks, each from its own stream, and accepted rows are merged
by proposal index, so results do not depend on the worker count.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from selrand.errors import BudgetExhausted
from selrand.inference.problem import SelectiveProblem
from selrand.samplers.streams import Seed, rng_for

logger = logging.getLogger(__name__)

DEFAULT_CHUNK = 2048


@dataclass(frozen=True)
class RejectionDiagnostics:
    accepted: int
    proposals_attempted: int

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.proposals_attempted if self.proposals_attempted else 0.0

    def to_dict(self) -> dict:
        return {
            "accepted": self.accepted,
            "proposals_attempted": self.proposals_attempted,
            "acceptance_rate": self.acceptance_rate,
        }


def rejection_sample(
    problem: SelectiveProblem,
    num_samples: int,
    seed: Seed,
    *,
    max_attempts: int | None = None,
    chunk_size: int = DEFAULT_CHUNK,
    threads: int = 1,
) -> tuple[np.ndarray, RejectionDiagnostics]:
    """Draw ``num_samples`` assignments i.i.d. from the reference set.

    Raises BudgetExhausted once ``max_attempts`` proposals (default
    1000 * num_samples) are spent without enough acceptances.
    """
    if num_samples < 1:
        raise ValueError("num_samples must be positive")
    max_attempts = max_attempts or 1000 * num_samples
    if max_attempts < num_samples:
        raise ValueError("max_attempts must be at least num_samples")

    accepted: list[np.ndarray] = []
    count = 0
    attempts = 0
    index = 0
    with ThreadPoolExecutor(max_workers=max(threads, 1)) as pool:
        while attempts < max_attempts:
            sizes = []
            offset = attempts
            for _ in range(max(threads, 1)):
                size = min(chunk_size, max_attempts - offset)
                if size <= 0:
                    break
                sizes.append(size)
                offset += size
            futures = [
                pool.submit(_accept_chunk, problem, seed, index + i, size)
                for i, size in enumerate(sizes)
            ]
            index += len(sizes)
            for size, future in zip(sizes, futures):
                rows, positions = future.result()
                needed = num_samples - count
                if len(rows) >= needed:
                    accepted.append(rows[:needed])
                    attempts += int(positions[needed - 1]) + 1
                    count = num_samples
                    diagnostics = RejectionDiagnostics(count, attempts)
                    logger.debug(
                        "rejection sampling: %d accepted of %d proposals (%.4f)",
                        count,
                        attempts,
                        diagnostics.acceptance_rate,
                    )
                    return np.vstack(accepted), diagnostics
                accepted.append(rows)
                count += len(rows)
                attempts += size
    raise BudgetExhausted(count, attempts)


def _accept_chunk(
    problem: SelectiveProblem, seed: Seed, index: int, size: int
) -> tuple[np.ndarray, np.ndarray]:
    rng = rng_for(seed, "rejection", index)
    proposals = problem.propose_from_prior(rng, size)
    keep = problem.matches(proposals)
    return proposals[keep], np.flatnonzero(keep)
