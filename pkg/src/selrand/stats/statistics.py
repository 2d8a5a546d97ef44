"""Test statistics and the summaries the selection rules read.

Every statistic has a vectorized form over rows of candidate assignments.
The observed value is computed through the same code path as the candidates,
so ties compare exactly. In the vectorized form an undefined value maps to a
neutral one (0 for a standardized effect, +inf for a risk ratio); the scalar
operations raise instead.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Iterable
from dataclasses import dataclass

import numpy as np

from selrand.errors import DegenerateVariance, EmptyArm, ZeroDenominator
from selrand.stats.nulls import ImputedOutcomes
from selrand.trial.record import TrialRecord

SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True, eq=False)
class ArmMoments:
    count: np.ndarray
    mean: np.ndarray
    var: np.ndarray


def arm_moments(y: np.ndarray, z: np.ndarray, mask: np.ndarray, arm: int) -> ArmMoments:
    """Per-row count, mean and mean squared deviation of the units on ``arm``."""
    sel = (z == arm) & mask
    count = sel.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(sel, y, 0.0).sum(axis=1) / count
        dev = np.where(sel, y - mean[:, None], 0.0)
        var = (dev**2).sum(axis=1) / count
    return ArmMoments(count, mean, var)


def standardized_ate_rows(
    y: np.ndarray, z: np.ndarray, mask: np.ndarray, arm_pair: tuple[int, int] = (1, 0)
) -> tuple[np.ndarray, np.ndarray]:
    """Standardized ATE per row and a mask of rows where it is defined.

    A row with an empty arm or zero variance in both arms gets the sentinel 0
    and ``defined`` False. Check the mask before reading 0 as a computed
    effect; ``standardized_ate`` raises ``EmptyArm`` or ``DegenerateVariance``
    for the same rows.
    """
    treated = arm_moments(y, z, mask, arm_pair[0])
    control = arm_moments(y, z, mask, arm_pair[1])
    scale = np.sqrt(treated.var + control.var)
    defined = (treated.count > 0) & (control.count > 0) & (scale > 0)
    with np.errstate(invalid="ignore", divide="ignore"):
        value = (treated.mean - control.mean) / scale
    return np.where(defined, value, 0.0), defined


def ate_zscore_rows(
    y: np.ndarray, z: np.ndarray, mask: np.ndarray, arm_pair: tuple[int, int] = (1, 0)
) -> tuple[np.ndarray, np.ndarray]:
    """Difference in arm means over its standard error; 0 where undefined.

    Under a null with i.i.d. outcomes this is roughly standard normal, which
    the enrichment thresholds assume.
    """
    treated = arm_moments(y, z, mask, arm_pair[0])
    control = arm_moments(y, z, mask, arm_pair[1])
    defined = (treated.count > 0) & (control.count > 0)
    with np.errstate(invalid="ignore", divide="ignore"):
        se = np.sqrt(treated.var / treated.count + control.var / control.count)
        value = (treated.mean - control.mean) / se
    defined &= se > 0
    return np.where(defined, value, 0.0), defined


def relative_risk_rows(
    y: np.ndarray, z: np.ndarray, mask: np.ndarray, arm_pair: tuple[int, int] = (1, 0)
) -> tuple[np.ndarray, np.ndarray]:
    """Risk ratio treated/control per row; +inf where undefined."""
    treated = (z == arm_pair[0]) & mask
    control = (z == arm_pair[1]) & mask
    n_t = treated.sum(axis=1)
    n_c = control.sum(axis=1)
    e_t = np.where(treated, y, 0.0).sum(axis=1)
    e_c = np.where(control, y, 0.0).sum(axis=1)
    defined = (n_t > 0) & (n_c > 0) & (e_c > 0)
    with np.errstate(invalid="ignore", divide="ignore"):
        value = (e_t / n_t) / (e_c / n_c)
    return np.where(defined, value, np.inf), defined


def standardized_ate(
    rec: TrialRecord,
    imputed: ImputedOutcomes,
    group: str,
    z: np.ndarray | None = None,
    *,
    arm_pair: tuple[int, int] = (1, 0),
    stages: Iterable[int] | None = None,
) -> float:
    """Standardized ATE of ``group`` under assignment ``z`` (default: observed).

    ``stages`` restricts to 0-based stage indices; the default uses every stage.
    """
    z = rec.z if z is None else np.asarray(z)
    mask = rec.groups == group
    if stages is not None:
        mask &= np.isin(rec.stage_of, list(stages))
    cols = np.flatnonzero(mask)
    y = imputed.outcomes_for(z[None, :], cols)
    zz = z[None, cols]
    full = np.ones(len(cols), dtype=bool)
    treated = arm_moments(y, zz, full, arm_pair[0])
    control = arm_moments(y, zz, full, arm_pair[1])
    for arm, m in zip(arm_pair, (treated, control)):
        if m.count[0] == 0:
            raise EmptyArm(f"group {group!r} has no units on arm {arm}")
    denom = float(treated.var[0] + control.var[0])
    if denom == 0.0:
        raise DegenerateVariance(f"group {group!r} has zero outcome variance in both arms")
    return float((treated.mean[0] - control.mean[0]) / math.sqrt(denom))


def scaled_delta(delta_high: float, delta_low: float) -> float:
    return (delta_high - delta_low) / SQRT2


def relative_risk(
    events_treated: int, total_treated: int, events_control: int, total_control: int
) -> float:
    if total_treated <= 0 or total_control <= 0:
        raise ZeroDenominator("both arms need at least one unit")
    if events_control == 0:
        raise ZeroDenominator("no events in the control arm")
    return (events_treated / total_treated) / (events_control / total_control)


RowStatistic = Callable[
    [np.ndarray, np.ndarray, np.ndarray, tuple[int, int]], tuple[np.ndarray, np.ndarray]
]


@dataclass(frozen=True)
class Statistic:
    name: str
    rows: RowStatistic

    def evaluate(
        self, y: np.ndarray, z: np.ndarray, mask: np.ndarray, arm_pair: tuple[int, int]
    ) -> np.ndarray:
        return self.rows(y, z, mask, arm_pair)[0]


STATISTICS: dict[str, Statistic] = {
    "standardized_ate_selected_groups": Statistic(
        "standardized_ate_selected_groups", standardized_ate_rows
    ),
    "relative_risk": Statistic("relative_risk", relative_risk_rows),
}


def get_statistic(stat_id: str) -> Statistic:
    try:
        return STATISTICS[stat_id]
    except KeyError:
        known = ", ".join(sorted(STATISTICS))
        raise KeyError(f"unknown statistic {stat_id!r}; known: {known}") from None


def statistic_columns(
    rec: TrialRecord, groups: Iterable[str] | None, stages: Iterable[int] | None = None
) -> np.ndarray:
    """Recruited-unit columns a statistic over ``groups`` and ``stages`` reads."""
    mask = np.ones(len(rec.unit_ids), dtype=bool)
    if groups is not None:
        mask &= np.isin(rec.groups, list(groups))
    if stages is not None:
        mask &= np.isin(rec.stage_of, list(stages))
    return np.flatnonzero(mask)


def eval_test_statistic(
    stat_id: str,
    z: np.ndarray,
    rec: TrialRecord,
    imputed: ImputedOutcomes,
    *,
    groups: Iterable[str] | None = None,
    stages: Iterable[int] | None = None,
    arm_pair: tuple[int, int] = (1, 0),
) -> float:
    """Value of a registered statistic under ``z``; NotImputable if it needs unknown cells."""
    stat = get_statistic(stat_id)
    z = np.atleast_2d(z)
    cols = statistic_columns(rec, groups, stages)
    y = imputed.outcomes_for(z, cols)
    return float(stat.evaluate(y, z[:, cols], np.ones(len(cols), dtype=bool), arm_pair)[0])
