"""Random-walk Metropolis sampling on the reference set.

Each step picks a stage uniformly among those with room to move, then a
uniform subset of its free entries, and re-randomizes that subset with the
stage kernel (a shuffle for CRD, fresh coin flips for Bernoulli). Both
kernels are symmetric with respect to the target law, so a proposal is
accepted iff it stays in the reference set.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from selrand.errors import ChainTooShort
from selrand.inference.problem import SelectiveProblem
from selrand.samplers.streams import Seed, child, rng_for
from selrand.trial.mechanisms import Bernoulli, BoundMechanism

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RwmConfig:
    num_samples: int = 1000
    window: int | tuple[int, ...] = 5
    burn_in: int | None = None

    def __post_init__(self) -> None:
        if self.num_samples < 1:
            raise ValueError("num_samples must be positive")
        windows = (self.window,) if isinstance(self.window, int) else self.window
        if any(h < 1 for h in windows):
            raise ValueError(f"window sizes must be positive, got {self.window}")
        if self.effective_burn_in >= self.num_samples:
            raise ValueError(
                f"burn-in {self.effective_burn_in} must be below chain length {self.num_samples}"
            )

    @property
    def effective_burn_in(self) -> int:
        if self.burn_in is None:
            return math.ceil(self.num_samples / 10)
        return self.burn_in

    def window_for(self, stage: int) -> int:
        if isinstance(self.window, int):
            return self.window
        return self.window[stage] if stage < len(self.window) else self.window[-1]


@dataclass
class ChainDiagnostics:
    acceptance_rate: float
    msejd: float
    proposals_attempted: int
    burn_in: int
    class_size: int | None = None

    def to_dict(self) -> dict:
        return {
            "acceptance_rate": self.acceptance_rate,
            "msejd": self.msejd,
            "proposals_attempted": self.proposals_attempted,
            "burn_in": self.burn_in,
            "class_size": self.class_size,
        }


@dataclass
class ChainResult:
    statistics: np.ndarray
    diagnostics: ChainDiagnostics
    states: np.ndarray | None = None
    jumps: np.ndarray = field(default_factory=lambda: np.empty(0))

    def post_burn_in(self) -> np.ndarray:
        return self.statistics[self.diagnostics.burn_in :]


def propose(
    z_current: np.ndarray,
    subset: np.ndarray,
    mechanism: BoundMechanism,
    rng: np.random.Generator,
) -> np.ndarray:
    """Re-randomize a stage-local vector on ``subset``; other entries are unchanged."""
    return mechanism.propose(rng, z_current, np.asarray(subset))


def msejd(chain: np.ndarray | Sequence[np.ndarray]) -> float:
    """Mean squared Euclidean jump distance over adjacent chain states."""
    states = np.asarray(chain, dtype=float)
    if states.ndim == 1:
        states = states[:, None]
    if states.shape[0] < 2:
        raise ChainTooShort(f"need at least 2 states, got {states.shape[0]}")
    jumps = np.sum(np.diff(states, axis=0) ** 2, axis=1)
    return float(jumps.sum() / (states.shape[0] - 1))


def _min_free(mech: BoundMechanism) -> int:
    return 1 if isinstance(mech, Bernoulli) else 2


def rwm_chain(
    problem: SelectiveProblem,
    cfg: RwmConfig,
    seed: Seed,
    *,
    keep_states: bool = False,
) -> ChainResult:
    """Run one chain of ``cfg.num_samples`` steps started at the observed assignment."""
    rng = rng_for(seed, "rwm")
    rec = problem.record
    stage_free = problem.stage_free()
    movable = [
        k
        for k, (free, mech) in enumerate(zip(stage_free, problem.mechanisms))
        if len(free) >= _min_free(mech)
    ]
    state = problem.observed.copy()
    current_stat = problem.observed_statistic
    m = cfg.num_samples
    stats = np.empty(m)
    jumps = np.zeros(m)
    states = np.empty((m, problem.size), dtype=np.int8) if keep_states else None
    accepted = 0

    for t in range(m):
        if movable:
            k = movable[int(rng.integers(len(movable)))]
            sl = rec.stage_slices[k]
            free = stage_free[k]
            h = min(cfg.window_for(k), len(free))
            subset = rng.choice(free, size=h, replace=False)
            local = propose(state[sl], subset, problem.mechanisms[k], rng)
            if np.array_equal(local, state[sl]):
                accepted += 1
            else:
                candidate = state.copy()
                candidate[sl] = local
                if problem.matches(candidate)[0]:
                    jumps[t] = float(np.sum((candidate.astype(float) - state) ** 2))
                    state = candidate
                    current_stat = float(problem.statistic_rows(state[None, :])[0])
                    accepted += 1
        stats[t] = current_stat
        if states is not None:
            states[t] = state

    burn_in = cfg.effective_burn_in
    post = jumps[burn_in + 1 :]
    diagnostics = ChainDiagnostics(
        acceptance_rate=accepted / m,
        msejd=float(post.sum() / len(post)) if len(post) else 0.0,
        proposals_attempted=m,
        burn_in=burn_in,
    )
    logger.debug(
        "rwm chain: %d steps, acceptance %.3f, msejd %.3f",
        m,
        diagnostics.acceptance_rate,
        diagnostics.msejd,
    )
    return ChainResult(stats, diagnostics, states, jumps)


def batch_means_se(indicators: np.ndarray) -> float | None:
    """Batch-means standard error of the mean of a correlated series."""
    values = np.asarray(indicators, dtype=float)
    num_batches = int(math.isqrt(len(values)))
    if num_batches < 2:
        return None
    size = len(values) // num_batches
    means = values[: num_batches * size].reshape(num_batches, size).mean(axis=1)
    return float(np.std(means, ddof=1) / math.sqrt(num_batches))


def pilot_scores(
    problem: SelectiveProblem,
    candidates: Sequence[int],
    pilot_length: int,
    seed: Seed,
) -> dict[int, float]:
    """MSEJD of a pilot chain (no burn-in) for each candidate window."""
    if not candidates:
        raise ValueError("at least one candidate window is required")
    scores: dict[int, float] = {}
    for h in sorted({int(c) for c in candidates}):
        cfg = RwmConfig(num_samples=pilot_length, window=h, burn_in=0)
        scores[h] = rwm_chain(problem, cfg, child(seed, "pilot", h)).diagnostics.msejd
        logger.debug("pilot window %d: msejd %.4f", h, scores[h])
    return scores


def tune_window(
    problem: SelectiveProblem,
    candidates: Sequence[int],
    pilot_length: int,
    seed: Seed,
) -> int:
    """Window with the largest pilot MSEJD."""
    return best_window(pilot_scores(problem, candidates, pilot_length, seed))


def best_window(scores: dict[int, float]) -> int:
    """Largest score wins; ties go to the smaller window."""
    best = max(scores.values())
    chosen = min(h for h, s in scores.items() if s == best)
    logger.info("chose window %d (msejd %.4f)", chosen, best)
    return chosen
