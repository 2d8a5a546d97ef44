"""Assignment probabilities and enumeration of the realized assignment space.

Assignments are flat ``int8`` vectors over the recruited units in stage
order. Stage mechanisms are bound with the recorded selection values: the
reference set always satisfies S(z*) = S(z), so the observed S_{k-1} is the
one every candidate shares.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Iterator, Mapping
from dataclasses import dataclass
from typing import Literal

import numpy as np

from selrand.errors import InfeasibleAssignment, NotImputable, SpaceTooLarge
from selrand.trial.mechanisms import (
    AdaptiveMechanism,
    BoundMechanism,
    StageHistory,
    bind_mechanism,
)
from selrand.trial.record import TrialRecord
from selrand.trial.spec import TrialSpec

logger = logging.getLogger(__name__)

Source = Literal["observed", "rejection", "rwm", "enumeration"]


@dataclass(frozen=True, eq=False)
class AssignmentSample:
    """One candidate assignment with its selection path, G value and log-probability."""

    z: np.ndarray
    s_value: tuple[str, ...]
    g_value: np.ndarray
    log_weight: float
    source: Source


def bind_stage_mechanisms(spec: TrialSpec, rec: TrialRecord) -> list[BoundMechanism]:
    mechanisms = []
    for k, sl in enumerate(rec.stage_slices, start=1):
        previous = rec.selections[k - 2] if k > 1 and len(rec.selections) >= k - 1 else None
        mechanisms.append(bind_mechanism(spec, k, rec.groups[sl], previous, rec.z[sl]))
    return mechanisms


def assignment_log_weight(
    spec: TrialSpec,
    rec: TrialRecord,
    z: np.ndarray,
    *,
    overrides: Mapping[int, AdaptiveMechanism] | None = None,
    imputed=None,
) -> float:
    """Sum of stage-wise log assignment probabilities of ``z``.

    ``overrides`` maps a 1-based stage to an adaptive mechanism that reads
    the prior stages' data along ``z``; those outcomes come from ``imputed``
    (an ``ImputedOutcomes``) and must be known there.
    """
    z = np.asarray(z)
    overrides = dict(overrides or {})
    mechanisms = bind_stage_mechanisms(spec, rec)
    total = 0.0
    for k, (sl, mech) in enumerate(zip(rec.stage_slices, mechanisms), start=1):
        if k in overrides:
            history = _history(rec, z, k, imputed)
            lp = overrides[k].log_prob(z[sl], history)
        else:
            lp = float(mech.log_prob(z[sl][None, :])[0])
        if not math.isfinite(lp):
            raise InfeasibleAssignment(k, "assignment has zero probability under the mechanism")
        total += lp
    return total


def assignment_log_weights(
    mechanisms: list[BoundMechanism], rec: TrialRecord, z: np.ndarray
) -> np.ndarray:
    """Vectorized log weights for rows of ``z``; -inf marks infeasible rows."""
    z = np.atleast_2d(z)
    total = np.zeros(z.shape[0])
    for sl, mech in zip(rec.stage_slices, mechanisms):
        total += mech.log_prob(z[:, sl])
    return total


def _history(rec: TrialRecord, z: np.ndarray, stage: int, imputed) -> StageHistory:
    prior = slice(0, rec.stage_slices[stage - 1].start)
    if prior.stop == 0:
        return StageHistory((), (), rec.groups[prior])
    if imputed is None:
        if np.array_equal(z[prior], rec.z[prior]):
            outcomes = rec.y[prior]
        else:
            cells = [(int(u), int(a)) for u, a in zip(rec.unit_ids[prior], z[prior])]
            raise NotImputable(cells)
    else:
        outcomes = imputed.outcomes_for(z[None, :], np.arange(prior.stop))[0]
    zs = tuple(z[sl] for sl in rec.stage_slices[: stage - 1])
    ys = tuple(outcomes[sl] for sl in rec.stage_slices[: stage - 1])
    return StageHistory(zs, ys, rec.groups[prior])


@dataclass(frozen=True, eq=False)
class AssignmentSpace:
    """Cartesian product of per-stage assignment sets, optionally with pinned entries."""

    mechanisms: tuple[BoundMechanism, ...]
    slices: tuple[slice, ...]
    current: np.ndarray | None = None
    free: np.ndarray | None = None

    def _stage_args(self, sl: slice) -> tuple[np.ndarray | None, np.ndarray | None]:
        current = None if self.current is None else self.current[sl]
        free = None if self.free is None else self.free[sl]
        return current, free

    def count(self) -> int:
        return math.prod(
            mech.count(*self._stage_args(sl)) for mech, sl in zip(self.mechanisms, self.slices)
        )

    def matrix(self, cap: int) -> np.ndarray:
        """All assignments, lexicographic with stage 1 varying slowest."""
        total = self.count()
        if total > cap:
            raise SpaceTooLarge(total, cap)
        blocks = [
            mech.enumerate(*self._stage_args(sl)) for mech, sl in zip(self.mechanisms, self.slices)
        ]
        out = blocks[0]
        for block in blocks[1:]:
            out = np.hstack(
                [np.repeat(out, block.shape[0], axis=0), np.tile(block, (out.shape[0], 1))]
            )
        logger.debug("enumerated %d assignments", out.shape[0])
        return out


def enumerate_assignments(spec: TrialSpec, rec: TrialRecord, cap: int) -> Iterator[np.ndarray]:
    """Yield every assignment of the realized space once, in lexicographic order."""
    space = AssignmentSpace(tuple(bind_stage_mechanisms(spec, rec)), rec.stage_slices)
    return iter(space.matrix(cap))
