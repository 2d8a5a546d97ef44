"""Randomization p-values: selective (exact, rejection, random walk), naive and split."""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from selrand.inference.problem import SelectiveProblem
from selrand.samplers.exact import (
    DEFAULT_CAP,
    class_conditional_support,
    exact_conditional_support,
)
from selrand.samplers.rejection import DEFAULT_CHUNK, rejection_sample
from selrand.samplers.rwm import RwmConfig, batch_means_se, rwm_chain
from selrand.samplers.streams import Seed, child, rng_for
from selrand.selection.conditioning import observed_selections
from selrand.stats.nulls import NullSpec, null_for_selection
from selrand.trial.assignment import AssignmentSample
from selrand.trial.record import TrialRecord
from selrand.trial.spec import TrialSpec

logger = logging.getLogger(__name__)

Direction = Literal["less", "greater"]

# enumerate the RWM support for a class-size diagnostic only below this size
CLASS_SIZE_CAP = 5000


@dataclass
class PValueResult:
    estimate: float
    method: str
    mc_standard_error: float | None = None
    num_samples: int = 0
    observed_statistic: float | None = None
    selection: tuple[str, ...] = ()
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "estimate": self.estimate,
            "method": self.method,
            "mc_standard_error": self.mc_standard_error,
            "num_samples": self.num_samples,
            "observed_statistic": self.observed_statistic,
            "selection": list(self.selection),
            "diagnostics": dict(self.diagnostics),
        }


@dataclass(frozen=True)
class ExactMethod:
    cap: int = DEFAULT_CAP
    within_class: int | None = None


@dataclass(frozen=True)
class RejectionMethod:
    num_samples: int = 1000
    max_attempts: int | None = None
    chunk_size: int = DEFAULT_CHUNK
    threads: int = 1


@dataclass(frozen=True)
class RwmMethod:
    config: RwmConfig = field(default_factory=RwmConfig)


Sampler = ExactMethod | RejectionMethod | RwmMethod


def _extreme(values: np.ndarray, observed: float, direction: str) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if direction == "greater":
        return values >= observed
    return values <= observed


def mc_pvalue(
    stat_values: Sequence[float] | np.ndarray, observed: float, direction: Direction = "less"
) -> PValueResult:
    """(1 + number of draws at least as extreme) / (1 + number of draws)."""
    values = np.asarray(stat_values, dtype=float)
    if values.size == 0:
        raise ValueError("need at least one Monte Carlo draw")
    m = values.size
    hits = int(_extreme(values, observed, direction).sum())
    estimate = (1 + hits) / (1 + m)
    return PValueResult(
        estimate=estimate,
        method="mc",
        mc_standard_error=math.sqrt(estimate * (1 - estimate) / m),
        num_samples=m,
        observed_statistic=float(observed),
    )


def pvalue_for_problem(
    problem: SelectiveProblem, sampler: Sampler, seed: Seed, *, method: str | None = None
) -> PValueResult:
    """P-value of a bound test with the chosen sampler."""
    observed = problem.observed_statistic
    selection = tuple(problem.record.selections)
    if isinstance(sampler, ExactMethod):
        support = exact_conditional_support(problem, sampler.cap)
        diagnostics = {"support_size": len(support)}
        tag = "selective_exact"
        if sampler.within_class is not None:
            support = class_conditional_support(problem, support, sampler.within_class)
            diagnostics["class_size"] = len(support)
            tag = "selective_exact_class"
        hits = problem.compare(problem.statistic_rows(support.assignments))
        estimate = float(np.sum(support.weights[hits]))
        return PValueResult(
            estimate=min(estimate, 1.0),
            method=method or tag,
            num_samples=len(support),
            observed_statistic=observed,
            selection=selection,
            diagnostics=diagnostics,
        )

    if isinstance(sampler, RejectionMethod):
        samples, diag = rejection_sample(
            problem,
            sampler.num_samples,
            seed,
            max_attempts=sampler.max_attempts,
            chunk_size=sampler.chunk_size,
            threads=sampler.threads,
        )
        result = mc_pvalue(problem.statistic_rows(samples), observed, problem.direction)
        result.method = method or "selective_rejection"
        result.selection = selection
        result.diagnostics = diag.to_dict()
        return result

    chain = rwm_chain(problem, sampler.config, seed)
    post = chain.post_burn_in()
    hits = problem.compare(post)
    m = len(post)
    estimate = (1 + int(hits.sum())) / (1 + m)
    if problem.space().count() <= CLASS_SIZE_CAP:
        support = exact_conditional_support(problem, CLASS_SIZE_CAP)
        cls = class_conditional_support(problem, support, sampler.config.window)
        chain.diagnostics.class_size = len(cls)
    return PValueResult(
        estimate=estimate,
        method=method or "selective_rwm",
        mc_standard_error=batch_means_se(hits),
        num_samples=m,
        observed_statistic=observed,
        selection=selection,
        diagnostics=chain.diagnostics.to_dict(),
    )


def selective_pvalue(
    spec: TrialSpec, rec: TrialRecord, null: NullSpec, sampler: Sampler, seed: Seed
) -> PValueResult:
    """Selective randomization p-value of ``null`` given S(z*) = S(z) and G(z*) = G(z)."""
    problem = SelectiveProblem.build(spec, rec, null)
    return pvalue_for_problem(problem, sampler, seed)


def reference_draws(
    problem: SelectiveProblem, sampler: Sampler, count: int, seed: Seed
) -> list[AssignmentSample]:
    """``count`` assignments from the reference set, drawn the way ``sampler`` would.

    Chains contribute their last ``count`` post-burn-in states, so fewer come
    back when the chain is shorter than that.
    """
    if count < 1:
        raise ValueError("count must be positive")
    if isinstance(sampler, ExactMethod):
        support = exact_conditional_support(problem, sampler.cap)
        rng = rng_for(seed, "draws")
        picks = rng.choice(len(support), size=count, p=support.weights)
        return problem.samples(support.assignments[picks], "enumeration")
    if isinstance(sampler, RejectionMethod):
        rows, _ = rejection_sample(
            problem,
            count,
            seed,
            max_attempts=sampler.max_attempts,
            chunk_size=sampler.chunk_size,
            threads=sampler.threads,
        )
        return problem.samples(rows, "rejection")
    chain = rwm_chain(problem, sampler.config, seed, keep_states=True)
    states = chain.states[chain.diagnostics.burn_in :]
    return problem.samples(states[-count:], "rwm")


def naive_pvalue(
    spec: TrialSpec,
    rec: TrialRecord,
    null: NullSpec,
    num_samples: int,
    seed: Seed,
    *,
    sampler: Sampler | None = None,
) -> PValueResult:
    """Re-randomizes every stage and ignores the selection."""
    problem = SelectiveProblem.build(spec, rec, null, condition_on_selection=False)
    sampler = sampler or RejectionMethod(num_samples=num_samples)
    return pvalue_for_problem(problem, sampler, child(seed, "naive"), method="naive")


def split_pvalue(
    spec: TrialSpec,
    rec: TrialRecord,
    null: NullSpec,
    num_samples: int,
    seed: Seed,
    *,
    sampler: Sampler | None = None,
) -> PValueResult:
    """Keeps stage 1 at its observed assignment and tests on later-stage data only.

    The reference set is every later-stage re-randomization given Z1 and G; it
    is not filtered on the selection.
    """
    if rec.num_stages < 2:
        return PValueResult(estimate=1.0, method="split", num_samples=0)
    later = range(1, rec.num_stages)
    problem = SelectiveProblem.build(
        spec, rec, null, stat_stages=later, frozen_stages=(0,), condition_on_selection=False
    )
    sampler = sampler or RejectionMethod(num_samples=num_samples)
    return pvalue_for_problem(problem, sampler, child(seed, "split"), method="split")


PValueFunction = Callable[[float, Seed], PValueResult]


def make_pvalue_fn(
    spec: TrialSpec,
    rec: TrialRecord,
    *,
    method: str = "selective",
    sampler: Sampler | None = None,
    num_samples: int = 1000,
    scope: str | None = None,
) -> PValueFunction:
    """p(tau, seed) for one of the three tests on a fixed record."""
    sampler = sampler or RejectionMethod(num_samples=num_samples)
    if not rec.selections:
        rec = rec.with_selections(observed_selections(spec, rec))
    # naive and split only need an exact sampler passed through; MC ones use num_samples
    baseline = sampler if isinstance(sampler, ExactMethod) else None

    def evaluate(tau: float, seed: Seed) -> PValueResult:
        null = null_for_selection(spec, rec, tau, scope)
        if method == "naive":
            return naive_pvalue(spec, rec, null, num_samples, seed, sampler=baseline)
        if method == "split":
            return split_pvalue(spec, rec, null, num_samples, seed, sampler=baseline)
        if method == "selective":
            return selective_pvalue(spec, rec, null, sampler, seed)
        raise ValueError(f"unknown test {method!r}; expected naive, split or selective")

    return evaluate
