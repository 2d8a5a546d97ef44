"""The bound selective test: one record, one null, everything samplers need."""

from __future__ import annotations

import logging
from collections.abc import Iterable
from dataclasses import dataclass, field

import numpy as np

from selrand.selection.conditioning import (
    SelectionModel,
    conditioning_values,
    matches_rows,
    observed_selections,
)
from selrand.stats.nulls import ImputedOutcomes, NullSpec, impute
from selrand.stats.statistics import Statistic, get_statistic, statistic_columns
from selrand.trial.assignment import (
    AssignmentSample,
    AssignmentSpace,
    Source,
    assignment_log_weights,
    bind_stage_mechanisms,
)
from selrand.trial.mechanisms import BoundMechanism, CompletelyRandomized
from selrand.trial.record import TrialRecord
from selrand.trial.spec import TrialSpec

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class SelectiveProblem:
    """Reference set {z*: G(z*) = G(z), S(z*) = S(z)} with the statistic to rank.

    ``condition_on_selection=False`` drops the S constraint (the naive test).
    ``frozen_stages`` holds whole stages at their observed values on top of G.
    """

    spec: TrialSpec
    record: TrialRecord
    null: NullSpec
    imputed: ImputedOutcomes
    mechanisms: tuple[BoundMechanism, ...]
    selection: SelectionModel
    member: np.ndarray
    free: np.ndarray
    target_s: np.ndarray
    target_g: np.ndarray
    statistic: Statistic
    stat_columns: np.ndarray
    direction: str
    condition_on_selection: bool = True
    observed_statistic: float = field(init=False)

    def __post_init__(self) -> None:
        value = float(self.statistic_rows(self.record.z[None, :])[0])
        object.__setattr__(self, "observed_statistic", value)

    @classmethod
    def build(
        cls,
        spec: TrialSpec,
        rec: TrialRecord,
        null: NullSpec,
        *,
        stat_stages: Iterable[int] | None = None,
        frozen_stages: Iterable[int] = (),
        condition_on_selection: bool = True,
        direction: str | None = None,
    ) -> SelectiveProblem:
        if not rec.selections:
            rec = rec.with_selections(observed_selections(spec, rec))
        imputed = impute(rec, null, num_arms=spec.num_arms)
        selection = SelectionModel.build(spec, rec)
        member = null.in_subset(rec)
        target_g = conditioning_values(rec.z, member, null.arm_pair)[0]
        free = target_g == -1
        frozen = np.isin(rec.stage_of, list(frozen_stages))
        free = free & ~frozen
        groups = selection.selector.selected_groups(rec.selections[-1])
        logger.debug(
            "bound test on %d units (%d free), selection %s, groups %s",
            len(rec.unit_ids),
            int(free.sum()),
            "/".join(rec.selections),
            ",".join(groups),
        )
        return cls(
            spec=spec,
            record=rec,
            null=null,
            imputed=imputed,
            mechanisms=tuple(bind_stage_mechanisms(spec, rec)),
            selection=selection,
            member=member,
            free=free,
            target_s=selection.encode(rec.selections),
            target_g=target_g,
            statistic=get_statistic(spec.analysis.statistic),
            stat_columns=statistic_columns(rec, groups, stat_stages),
            direction=direction or spec.analysis.direction,
            condition_on_selection=condition_on_selection,
        )

    @property
    def size(self) -> int:
        return len(self.record.unit_ids)

    @property
    def observed(self) -> np.ndarray:
        return self.record.z

    def statistic_rows(self, z: np.ndarray) -> np.ndarray:
        z = np.atleast_2d(z)
        cols = self.stat_columns
        y = self.imputed.outcomes_for(z, cols)
        return self.statistic.evaluate(
            y, z[:, cols], np.ones(len(cols), dtype=bool), tuple(self.null.arm_pair)
        )

    def matches(self, z: np.ndarray) -> np.ndarray:
        """Row mask of membership in the reference set."""
        z = np.atleast_2d(z)
        frozen = (self.target_g == -1) & ~self.free
        ok = np.all(z[:, frozen] == self.observed[frozen], axis=1)
        if not self.condition_on_selection:
            g = conditioning_values(z, self.member, self.null.arm_pair)
            return ok & np.all(g == self.target_g, axis=1)
        if ok.any():
            ok[ok] = matches_rows(
                z[ok], self.target_s, self.target_g, self.selection, self.member, self.imputed
            )
        return ok

    def compare(self, values: np.ndarray) -> np.ndarray:
        """Indicator that a candidate statistic is at least as extreme as the observed one."""
        if self.direction == "greater":
            return values >= self.observed_statistic
        return values <= self.observed_statistic

    def stage_free(self) -> list[np.ndarray]:
        """Free positions (stage-local indices) per stage."""
        return [np.flatnonzero(self.free[sl]) for sl in self.record.stage_slices]

    def propose_from_prior(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Independent draws from the mechanism given the pinned entries."""
        out = np.empty((size, self.size), dtype=np.int8)
        for sl, mech in zip(self.record.stage_slices, self.mechanisms):
            out[:, sl] = mech.sample(rng, size, self.observed[sl], self.free[sl])
        return out

    def space(self) -> AssignmentSpace:
        return AssignmentSpace(self.mechanisms, self.record.stage_slices, self.observed, self.free)

    def log_weights(self, z: np.ndarray) -> np.ndarray:
        return assignment_log_weights(list(self.mechanisms), self.record, z)

    def samples(self, z: np.ndarray, source: Source) -> list[AssignmentSample]:
        """Each row of ``z`` with its S value (under the imputed outcomes), G value and log q."""
        z = np.atleast_2d(z).astype(np.int8)
        s_rows = self.selection.evaluate(z, self.imputed.outcomes_for)
        g_rows = conditioning_values(z, self.member, self.null.arm_pair)
        log_w = self.log_weights(z)
        return [
            AssignmentSample(
                z[i], self.selection.decode(s_rows[i]), g_rows[i], float(log_w[i]), source
            )
            for i in range(z.shape[0])
        ]

    def is_uniform(self) -> bool:
        return all(isinstance(m, CompletelyRandomized) for m in self.mechanisms)
