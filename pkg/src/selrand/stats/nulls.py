"""Homogeneous-effect null hypotheses and outcome imputation."""

from __future__ import annotations

import math
from collections.abc import Callable, Iterable
from dataclasses import dataclass

import numpy as np
import pandas as pd

from selrand.errors import NotImputable
from selrand.trial.record import TrialRecord
from selrand.trial.spec import TrialSpec


@dataclass(frozen=True)
class NullSpec:
    """H0: Y_i(l) - Y_i(l') = tau for every unit i in the subset.

    ``unit_ids`` of ``None`` means every recruited unit (a sharp null).
    """

    tau: float
    arm_pair: tuple[int, int] = (1, 0)
    unit_ids: frozenset[int] | None = None

    def __post_init__(self) -> None:
        if self.arm_pair[0] == self.arm_pair[1]:
            raise ValueError(f"arm pair must name two different arms, got {self.arm_pair}")
        if not math.isfinite(self.tau):
            raise ValueError(f"tau must be finite, got {self.tau}")

    @classmethod
    def from_predicate(
        cls,
        rec: TrialRecord,
        predicate: Callable[[int, pd.Series], bool],
        tau: float,
        arm_pair: tuple[int, int] = (1, 0),
    ) -> NullSpec:
        chosen = frozenset(int(u) for u, row in rec.units.iterrows() if predicate(int(u), row))
        return cls(tau=tau, arm_pair=arm_pair, unit_ids=chosen)

    def in_subset(self, rec: TrialRecord) -> np.ndarray:
        """Mask over recruited units (stage order) of membership in the subset."""
        if self.unit_ids is None:
            return np.ones(len(rec.unit_ids), dtype=bool)
        return np.isin(rec.unit_ids, np.fromiter(self.unit_ids, dtype=np.int64))

    def with_tau(self, tau: float) -> NullSpec:
        return NullSpec(tau=tau, arm_pair=self.arm_pair, unit_ids=self.unit_ids)


def null_for_selection(
    spec: TrialSpec, rec: TrialRecord, tau: float, scope: str | None = None
) -> NullSpec:
    """Null selected by the final selection value, over all units or the selected groups."""
    scope = scope or spec.analysis.null_scope
    arm_pair = tuple(spec.analysis.arm_pair)
    if scope == "all":
        return NullSpec(tau=tau, arm_pair=arm_pair)
    if not rec.selections:
        raise ValueError("record carries no selection values; cannot scope the null")
    groups = set(spec.selection_rule.selected_groups(rec.selections[-1]))
    units = rec.units.index[rec.units["group"].astype(str).isin(groups)]
    return NullSpec(tau=tau, arm_pair=arm_pair, unit_ids=frozenset(int(u) for u in units))


@dataclass(frozen=True, eq=False)
class ImputedOutcomes:
    """Outcome table over recruited units x arms with a known-mask."""

    unit_ids: np.ndarray
    values: np.ndarray
    known: np.ndarray

    def outcomes_for(self, z: np.ndarray, columns: np.ndarray | slice | None = None) -> np.ndarray:
        """Outcomes of ``columns`` under each full-width row of ``z``.

        Raises NotImputable listing the unknown cells the rows demand.
        """
        z = np.atleast_2d(z)
        everything = np.arange(self.values.shape[0])
        cols = everything if columns is None else everything[columns]
        arms = z[:, cols].astype(np.intp)
        known = self.known[cols, arms]
        if not known.all():
            rows, where = np.nonzero(~known)
            cells = {(int(self.unit_ids[cols[j]]), int(arms[r, j])) for r, j in zip(rows, where)}
            raise NotImputable(cells)
        return self.values[cols, arms]

    def unknown_cells(self) -> list[tuple[int, int]]:
        units, arms = np.nonzero(~self.known)
        return [(int(self.unit_ids[u]), int(a)) for u, a in zip(units, arms)]


def impute(rec: TrialRecord, null: NullSpec, num_arms: int | None = None) -> ImputedOutcomes:
    """Fill the outcome table implied by the observed data and the null."""
    n = len(rec.unit_ids)
    if num_arms is None:
        num_arms = max(int(rec.z.max(initial=0)) + 1, max(null.arm_pair) + 1)
    values = np.full((n, num_arms), np.nan)
    known = np.zeros((n, num_arms), dtype=bool)
    rows = np.arange(n)
    z = rec.z.astype(np.intp)
    values[rows, z] = rec.y
    known[rows, z] = True

    l_arm, l_other = null.arm_pair
    member = null.in_subset(rec)
    on_l = member & (z == l_arm)
    on_other = member & (z == l_other)
    values[on_l, l_other] = rec.y[on_l] - null.tau
    known[on_l, l_other] = True
    values[on_other, l_arm] = rec.y[on_other] + null.tau
    known[on_other, l_arm] = True
    return ImputedOutcomes(rec.unit_ids.copy(), values, known)


def units_of(rec: TrialRecord, groups: Iterable[str]) -> np.ndarray:
    """Mask over recruited units belonging to ``groups``."""
    return np.isin(rec.groups, list(groups))
