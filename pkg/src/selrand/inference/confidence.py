"""Confidence sets by test inversion, bisection for one-sided bounds, HL estimates.

Every tau on a curve is tested with the same random stream (common random
numbers), so neighbouring grid points differ only through the null and the
curve is as smooth as the test allows.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from selrand.errors import NoBracket, SelrandError, Undefined, UsageError
from selrand.inference.pvalues import PValueFunction, Sampler, make_pvalue_fn
from selrand.samplers.streams import Seed, child
from selrand.trial.record import TrialRecord
from selrand.trial.spec import TrialSpec

logger = logging.getLogger(__name__)


@dataclass
class ConfidenceSet:
    alpha: float
    grid: tuple[float, float, float]
    taus: np.ndarray
    pvalues: np.ndarray
    ses: np.ndarray
    intervals: list[tuple[float, float]]
    # (tau, error code) for grid points whose p-value could not be computed
    gaps: list[tuple[float, str]] = field(default_factory=list)

    @property
    def connected(self) -> bool:
        return len(self.intervals) <= 1

    def contains(self, tau: float) -> bool:
        return any(a <= tau <= b for a, b in self.intervals)

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "grid": {"lo": self.grid[0], "hi": self.grid[1], "step": self.grid[2]},
            "intervals": [[a, b] for a, b in self.intervals],
            "p_curve": [
                {"tau": float(t), "p": _finite_or_none(p), "se": _finite_or_none(s)}
                for t, p, s in zip(self.taus, self.pvalues, self.ses)
            ],
            "gaps": [{"tau": t, "error": code} for t, code in self.gaps],
        }


def _finite_or_none(value: float) -> float | None:
    return float(value) if math.isfinite(value) else None


def tau_grid(lo: float, hi: float, step: float) -> np.ndarray:
    """Grid lo, lo + step, ... up to hi inclusive, built from integer offsets."""
    if not lo < hi:
        raise ValueError(f"grid needs lo < hi, got {lo} and {hi}")
    if step <= 0:
        raise ValueError(f"grid step must be positive, got {step}")
    count = int(round((hi - lo) / step))
    # integer offsets keep 0.0 exactly on the grid
    return np.round(lo + step * np.arange(count + 1), 12)


def parse_grid(text: str) -> tuple[float, float, float]:
    """Parse ``lo:hi:step``."""
    parts = text.split(":")
    if len(parts) != 3:
        raise UsageError(f"grid must look like lo:hi:step, got {text!r}")
    try:
        lo, hi, step = (float(p) for p in parts)
    except ValueError as exc:
        raise UsageError(f"grid must look like lo:hi:step, got {text!r}") from exc
    if not lo < hi or step <= 0:
        raise UsageError(f"grid {text!r} needs lo < hi and a positive step")
    return lo, hi, step


def intervals_above(
    taus: Sequence[float] | np.ndarray, pvalues: Sequence[float] | np.ndarray, alpha: float
) -> list[tuple[float, float]]:
    """Maximal runs of grid points with p > alpha, as closed intervals.

    A missing p-value (NaN) ends a run.
    """
    taus = np.asarray(taus, dtype=float)
    above = np.asarray(pvalues, dtype=float) > alpha
    intervals: list[tuple[float, float]] = []
    start = None
    for i, inside in enumerate(above):
        if inside and start is None:
            start = i
        elif not inside and start is not None:
            intervals.append((float(taus[start]), float(taus[i - 1])))
            start = None
    if start is not None:
        intervals.append((float(taus[start]), float(taus[-1])))
    return intervals


def evaluate_curve(
    pvalue_fn: PValueFunction,
    taus: Sequence[float] | np.ndarray,
    seed: Seed,
    *,
    threads: int = 1,
) -> tuple[np.ndarray, np.ndarray, list[tuple[float, str]]]:
    """p-value and MC standard error at each tau; failed points become NaN gaps."""
    taus = np.asarray(taus, dtype=float)
    stream = child(seed, "curve")

    def one(tau: float):
        try:
            return pvalue_fn(float(tau), stream)
        except SelrandError as exc:
            return exc

    with ThreadPoolExecutor(max_workers=max(threads, 1)) as pool:
        results = list(pool.map(one, taus))

    pvalues = np.full(len(taus), np.nan)
    ses = np.full(len(taus), np.nan)
    gaps: list[tuple[float, str]] = []
    for i, (tau, result) in enumerate(zip(taus, results)):
        if isinstance(result, SelrandError):
            logger.warning("p-value at tau=%g failed: %s: %s", tau, result.code, result.message)
            gaps.append((float(tau), result.code))
            continue
        pvalues[i] = result.estimate
        if result.mc_standard_error is not None:
            ses[i] = result.mc_standard_error
    return pvalues, ses, gaps


def confidence_set(
    spec: TrialSpec,
    rec: TrialRecord,
    grid: tuple[float, float, float],
    alpha: float,
    *,
    method: str = "selective",
    sampler: Sampler | None = None,
    num_samples: int = 1000,
    seed: Seed = 0,
    threads: int = 1,
    scope: str | None = None,
) -> ConfidenceSet:
    """{tau on the grid : p(tau) > alpha} as a sorted list of closed intervals."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    taus = tau_grid(*grid)
    fn = make_pvalue_fn(
        spec, rec, method=method, sampler=sampler, num_samples=num_samples, scope=scope
    )
    pvalues, ses, gaps = evaluate_curve(fn, taus, seed, threads=threads)
    intervals = intervals_above(taus, pvalues, alpha)
    logger.info(
        "%s confidence set at alpha=%g over %d grid points: %d interval(s), %d gap(s)",
        method,
        alpha,
        len(taus),
        len(intervals),
        len(gaps),
    )
    return ConfidenceSet(alpha, tuple(grid), taus, pvalues, ses, intervals, gaps)


def bisect_lower_bound(
    p_fn: Callable[[float], float],
    alpha: float,
    bracket: tuple[float, float],
    tol: float,
) -> float:
    """Smallest tau with p(tau) > alpha, assuming p crosses alpha once in ``bracket``.

    Returns the upper end of the final bracket, which is within ``tol`` of the crossing.
    """
    lo, hi = bracket
    if not lo < hi:
        raise ValueError(f"bracket needs lo < hi, got {bracket}")
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    p_lo, p_hi = p_fn(lo), p_fn(hi)
    if not (p_lo <= alpha < p_hi):
        raise NoBracket(
            f"p({lo:g})={p_lo:.4g} and p({hi:g})={p_hi:.4g} do not bracket alpha={alpha:g}",
            p_lo,
            p_hi,
        )
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        p_mid = p_fn(mid)
        logger.debug("bisect [%g, %g]: p(%g)=%.4g", lo, hi, mid, p_mid)
        if p_mid <= alpha:
            lo = mid
        else:
            hi = mid
    return hi


def lower_bound_bisect(
    spec: TrialSpec,
    rec: TrialRecord,
    alpha: float,
    bracket: tuple[float, float],
    tol: float,
    *,
    method: str = "selective",
    sampler: Sampler | None = None,
    num_samples: int = 1000,
    seed: Seed = 0,
    scope: str | None = None,
) -> float:
    """One-sided lower confidence bound for tau by bisection on the p-value."""
    fn = make_pvalue_fn(
        spec, rec, method=method, sampler=sampler, num_samples=num_samples, scope=scope
    )
    stream = child(seed, "bisect")
    return bisect_lower_bound(lambda tau: fn(tau, stream).estimate, alpha, bracket, tol)


def hl_estimate(
    taus: Sequence[float] | np.ndarray, pvalues: Sequence[float] | np.ndarray
) -> float:
    """Midpoint of sup{tau: p < 1/2} and inf{tau: p > 1/2} over the evaluated grid."""
    taus = np.asarray(taus, dtype=float)
    pvalues = np.asarray(pvalues, dtype=float)
    below = taus[pvalues < 0.5]
    above = taus[pvalues > 0.5]
    if len(below) == 0:
        raise Undefined("sup")
    if len(above) == 0:
        raise Undefined("inf")
    return 0.5 * (float(below.max()) + float(above.min()))


def count_crossings(pvalues: Sequence[float] | np.ndarray, level: float = 0.5) -> int:
    """Number of times the curve moves between the two sides of ``level``.

    Points exactly at the level and missing points are skipped.
    """
    sides = [
        p > level
        for p in np.asarray(pvalues, dtype=float)
        if math.isfinite(p) and p != level
    ]
    return sum(a != b for a, b in zip(sides, sides[1:]))
