"""Exact conditional law of the assignment on small instances.

The support is enumerated over the free entries only (pinned entries are
fixed by G), filtered by S, and weighted by the mechanism probabilities
normalized in the log domain.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.special import logsumexp

from selrand.errors import InfeasibleAssignment
from selrand.inference.problem import SelectiveProblem

logger = logging.getLogger(__name__)

DEFAULT_CAP = 1_000_000


@dataclass(frozen=True, eq=False)
class ExactSupport:
    assignments: np.ndarray
    weights: np.ndarray

    def __len__(self) -> int:
        return self.assignments.shape[0]

    def index_of(self, z: np.ndarray) -> int:
        hits = np.flatnonzero(np.all(self.assignments == np.asarray(z), axis=1))
        if len(hits) == 0:
            raise KeyError("assignment is not in the support")
        return int(hits[0])


def exact_conditional_support(problem: SelectiveProblem, cap: int = DEFAULT_CAP) -> ExactSupport:
    """All assignments in the reference set with their normalized probabilities."""
    candidates = problem.space().matrix(cap)
    keep = problem.matches(candidates)
    support = candidates[keep]
    log_w = problem.log_weights(support)
    finite = np.isfinite(log_w)
    support, log_w = support[finite], log_w[finite]
    if len(support) == 0:
        raise InfeasibleAssignment(0, "reference set has no assignment with positive probability")
    weights = np.exp(log_w - logsumexp(log_w))
    logger.debug("exact support: %d of %d candidates", len(support), len(candidates))
    return ExactSupport(support, weights)


def _windows(problem: SelectiveProblem, window: int | Sequence[int]) -> list[int]:
    k = problem.record.num_stages
    if isinstance(window, int):
        return [window] * k
    return [window[i] if i < len(window) else window[-1] for i in range(k)]


def communication_labels(
    problem: SelectiveProblem, support: ExactSupport, window: int | Sequence[int]
) -> np.ndarray:
    """Component label of each support element under one-step kernel moves.

    Two states communicate in one step iff they differ inside a single stage,
    in at most min(h_k, free entries of stage k) positions.
    """
    z = support.assignments
    n = len(z)
    windows = _windows(problem, window)
    stage_free = problem.stage_free()
    limit = np.array([min(h, len(free)) for h, free in zip(windows, stage_free)])
    rows, cols = [], []
    for i in range(n):
        diff = z[i + 1 :] != z[i]
        per_stage = np.stack(
            [diff[:, sl].sum(axis=1) for sl in problem.record.stage_slices], axis=1
        )
        touched = (per_stage > 0).sum(axis=1)
        ok = touched <= 1
        stage = per_stage.argmax(axis=1)
        ok &= per_stage.max(axis=1) <= limit[stage]
        linked = np.flatnonzero(ok) + i + 1
        rows.extend([i] * len(linked))
        cols.extend(linked.tolist())
    graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    _, labels = connected_components(graph, directed=False)
    return labels


def communication_class(
    problem: SelectiveProblem,
    support: ExactSupport,
    start: np.ndarray,
    window: int | Sequence[int],
) -> np.ndarray:
    """Indices into ``support`` of the class containing ``start``."""
    labels = communication_labels(problem, support, window)
    return np.flatnonzero(labels == labels[support.index_of(start)])


def class_conditional_support(
    problem: SelectiveProblem,
    support: ExactSupport,
    window: int | Sequence[int],
    start: np.ndarray | None = None,
) -> ExactSupport:
    """Exact law restricted to the communication class of ``start`` (default: observed)."""
    start = problem.observed if start is None else start
    members = communication_class(problem, support, start, window)
    weights = support.weights[members]
    return ExactSupport(support.assignments[members], weights / weights.sum())
