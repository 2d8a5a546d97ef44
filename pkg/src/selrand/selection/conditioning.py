"""Selection vectors S(z), conditioning values G(z) and the matching predicate.

G keeps every entry the null cannot impute: G(z)_i = z_i when unit i is
outside the null's subset or z_i is not one of the two compared arms, and a
free marker (-1) otherwise. A sharp null over all units with two arms makes
G constant.
"""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from selrand.selection.rules import Selector, make_selector
from selrand.stats.nulls import ImputedOutcomes, NullSpec
from selrand.trial.record import TrialRecord
from selrand.trial.spec import TrialSpec

FREE = -1

OutcomeLookup = Callable[[np.ndarray, np.ndarray], np.ndarray]


def conditioning_values(
    z: np.ndarray, member: np.ndarray, arm_pair: tuple[int, int]
) -> np.ndarray:
    """Canonical G for each row of ``z``."""
    z = np.atleast_2d(z)
    free = member & np.isin(z, arm_pair)
    return np.where(free, FREE, z).astype(np.int8)


def free_entries(rec: TrialRecord, null: NullSpec) -> np.ndarray:
    """Entries of the observed assignment that G leaves free."""
    return conditioning_values(rec.z, null.in_subset(rec), null.arm_pair)[0] == FREE


def conditioning_statistic(z: np.ndarray, rec: TrialRecord, null: NullSpec) -> tuple[int, ...]:
    return tuple(int(v) for v in conditioning_values(z, null.in_subset(rec), null.arm_pair)[0])


@dataclass(frozen=True, eq=False)
class SelectionModel:
    """Per-stage selection components S_1..S_K bound to one record.

    S_k applies the rule to the stages up to k that are not held out.
    """

    selector: Selector
    arm_pair: tuple[int, int]
    stage_sets: tuple[tuple[int, ...], ...]
    columns: dict[tuple[int, ...], np.ndarray]
    groups: dict[tuple[int, ...], np.ndarray]

    @classmethod
    def build(cls, spec: TrialSpec, rec: TrialRecord) -> SelectionModel:
        selector = make_selector(spec.selection_rule)
        stage_sets = tuple(tuple(spec.selection_stages(k)) for k in range(1, rec.num_stages + 1))
        reads = selector.reads(rec.groups)
        columns, groups = {}, {}
        for stages in set(stage_sets):
            cols = np.flatnonzero(np.isin(rec.stage_of, stages) & reads)
            columns[stages] = cols
            groups[stages] = rec.groups[cols]
        return cls(selector, tuple(spec.analysis.arm_pair), stage_sets, columns, groups)

    @property
    def labels(self) -> tuple[str, ...]:
        return self.selector.labels

    def evaluate(self, z: np.ndarray, outcomes: OutcomeLookup) -> np.ndarray:
        """Label indices, shape (B, K)."""
        z = np.atleast_2d(z)
        cache: dict[tuple[int, ...], np.ndarray] = {}
        out = np.empty((z.shape[0], len(self.stage_sets)), dtype=np.int64)
        for k, stages in enumerate(self.stage_sets):
            if stages not in cache:
                cols = self.columns[stages]
                y = outcomes(z, cols)
                cache[stages] = self.selector.evaluate(
                    y, z[:, cols], self.groups[stages], self.arm_pair
                )
            out[:, k] = cache[stages]
        return out

    def encode(self, labels: tuple[str, ...] | list[str]) -> np.ndarray:
        return np.array([self.labels.index(label) for label in labels], dtype=np.int64)

    def decode(self, indices: np.ndarray) -> tuple[str, ...]:
        return tuple(self.labels[int(i)] for i in indices)


def _raw_outcomes(rec: TrialRecord) -> OutcomeLookup:
    def lookup(z: np.ndarray, cols: np.ndarray) -> np.ndarray:
        return np.broadcast_to(rec.y[cols], (z.shape[0], len(cols)))

    return lookup


def _imputed_outcomes(imputed: ImputedOutcomes) -> OutcomeLookup:
    return imputed.outcomes_for


def observed_selections(spec: TrialSpec, rec: TrialRecord) -> tuple[str, ...]:
    """S_1..S_K recomputed from the observed assignment and outcomes."""
    model = SelectionModel.build(spec, rec)
    return model.decode(model.evaluate(rec.z[None, :], _raw_outcomes(rec))[0])


def selection_statistic(
    z: np.ndarray, rec: TrialRecord, imputed: ImputedOutcomes, spec: TrialSpec
) -> tuple[str, ...]:
    model = SelectionModel.build(spec, rec)
    return model.decode(model.evaluate(np.asarray(z)[None, :], _imputed_outcomes(imputed))[0])


def matches_rows(
    z: np.ndarray,
    target_s: np.ndarray,
    target_g: np.ndarray,
    model: SelectionModel,
    member: np.ndarray,
    imputed: ImputedOutcomes,
) -> np.ndarray:
    """Boolean per row: G(z) equals ``target_g`` and S(z) equals ``target_s``.

    S is only evaluated on rows whose G matches, so outcomes are only
    demanded where the null can impute them.
    """
    z = np.atleast_2d(z)
    ok = np.all(conditioning_values(z, member, model.arm_pair) == target_g, axis=1)
    if ok.any():
        s = model.evaluate(z[ok], imputed.outcomes_for)
        ok[ok] = np.all(s == target_s, axis=1)
    return ok


def matches(
    z: np.ndarray,
    target_s: tuple[str, ...],
    target_g: tuple[int, ...],
    *,
    spec: TrialSpec,
    rec: TrialRecord,
    null: NullSpec,
    imputed: ImputedOutcomes,
) -> bool:
    model = SelectionModel.build(spec, rec)
    result = matches_rows(
        np.asarray(z)[None, :],
        model.encode(target_s),
        np.asarray(target_g, dtype=np.int8),
        model,
        null.in_subset(rec),
        imputed,
    )
    return bool(result[0])
