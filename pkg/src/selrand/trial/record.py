"""Realized trial data and its structural validation."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import pandas as pd

from selrand.errors import DataSchemaError
from selrand.trial.mechanisms import ASSIGNMENT_DTYPE, MAX_ARM_CODE
from selrand.trial.spec import TrialSpec


@dataclass(frozen=True, eq=False)
class StageData:
    unit_ids: np.ndarray
    treatments: np.ndarray
    outcomes: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "unit_ids", np.asarray(self.unit_ids, dtype=np.int64))
        raw = np.asarray(self.treatments)
        if raw.size and (np.any(raw < 0) or np.any(raw > MAX_ARM_CODE)):
            bad = raw[(raw < 0) | (raw > MAX_ARM_CODE)][0]
            raise DataSchemaError(f"arm code {bad} out of range", column="treatment")
        object.__setattr__(self, "treatments", raw.astype(ASSIGNMENT_DTYPE))
        object.__setattr__(self, "outcomes", np.asarray(self.outcomes, dtype=float))

    def __len__(self) -> int:
        return len(self.unit_ids)


@dataclass(frozen=True, eq=False)
class TrialRecord:
    """Units, per-stage recruitment/treatment/outcomes and realized selections.

    ``units`` is indexed by ``unit_id`` and has a ``group`` column; any other
    columns are covariates carried along untouched. ``potential_outcomes``
    (simulation only) is indexed by ``unit_id`` with one column per arm.
    """

    units: pd.DataFrame
    stages: tuple[StageData, ...]
    selections: tuple[str, ...] = ()
    potential_outcomes: pd.DataFrame | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def num_stages(self) -> int:
        return len(self.stages)

    @cached_property
    def unit_ids(self) -> np.ndarray:
        return np.concatenate([s.unit_ids for s in self.stages]) if self.stages else np.empty(0)

    @cached_property
    def z(self) -> np.ndarray:
        if not self.stages:
            return np.empty(0, dtype=ASSIGNMENT_DTYPE)
        return np.concatenate([s.treatments for s in self.stages]).astype(ASSIGNMENT_DTYPE)

    @cached_property
    def y(self) -> np.ndarray:
        return np.concatenate([s.outcomes for s in self.stages]) if self.stages else np.empty(0)

    @cached_property
    def stage_of(self) -> np.ndarray:
        return np.concatenate(
            [np.full(len(s), k, dtype=np.int64) for k, s in enumerate(self.stages)]
        )

    @cached_property
    def stage_slices(self) -> tuple[slice, ...]:
        bounds = np.cumsum([0] + [len(s) for s in self.stages])
        return tuple(slice(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]))

    @cached_property
    def groups(self) -> np.ndarray:
        """Group label of every recruited unit, in stage order."""
        return self.units.loc[self.unit_ids, "group"].astype(str).to_numpy()

    def with_selections(self, selections: tuple[str, ...] | list[str]) -> TrialRecord:
        return TrialRecord(
            units=self.units,
            stages=self.stages,
            selections=tuple(selections),
            potential_outcomes=self.potential_outcomes,
            metadata=dict(self.metadata),
        )

    def with_assignment(self, z: np.ndarray, outcomes: np.ndarray | None = None) -> TrialRecord:
        """Copy with the flat assignment ``z`` (and optionally outcomes) substituted."""
        stages = []
        for sl, stage in zip(self.stage_slices, self.stages):
            y = stage.outcomes if outcomes is None else outcomes[sl]
            stages.append(StageData(stage.unit_ids, z[sl], y))
        return TrialRecord(
            units=self.units,
            stages=tuple(stages),
            selections=self.selections,
            potential_outcomes=self.potential_outcomes,
            metadata=dict(self.metadata),
        )


@dataclass
class ValidationReport:
    issues: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.issues

    def add(self, message: str) -> None:
        self.issues.append(message)

    def to_dict(self) -> dict:
        return {"ok": self.ok, "issues": list(self.issues)}


def validate_record(spec: TrialSpec, rec: TrialRecord) -> ValidationReport:
    """List every structural problem of ``rec`` against ``spec``; never raises."""
    report = ValidationReport()
    if rec.num_stages != spec.num_stages:
        report.add(f"stage count mismatch: spec has {spec.num_stages}, record has {rec.num_stages}")
    if "group" not in rec.units.columns:
        report.add("units table lacks a group column")
    elif not rec.units["group"].astype(str).isin(spec.groups).all():
        unknown = sorted(set(rec.units["group"].astype(str)) - set(spec.groups))
        report.add(f"unknown groups: {', '.join(unknown)}")

    seen: dict[int, int] = {}
    for k, stage in enumerate(rec.stages, start=1):
        if len(stage.treatments) != len(stage.unit_ids):
            report.add(
                f"length mismatch in stage {k}: {len(stage.treatments)} treatments "
                f"for {len(stage.unit_ids)} recruited units"
            )
        if len(stage.outcomes) != len(stage.unit_ids):
            report.add(
                f"length mismatch in stage {k}: {len(stage.outcomes)} outcomes "
                f"for {len(stage.unit_ids)} recruited units"
            )
        arms = stage.treatments
        bad_arms = np.unique(arms[(arms < 0) | (arms >= spec.num_arms)])
        for arm in bad_arms:
            report.add(f"invalid arm {int(arm)} in stage {k}")
        if np.isnan(stage.outcomes).any():
            report.add(f"missing outcomes in stage {k}")
        for unit in stage.unit_ids.tolist():
            if unit in seen and seen[unit] != k:
                report.add(f"overlapping recruitment: unit {unit}")
            elif unit in seen:
                report.add(f"duplicate recruitment: unit {unit} in stage {k}")
            seen[unit] = k
        missing = np.setdiff1d(stage.unit_ids, rec.units.index.to_numpy())
        for unit in missing.tolist():
            report.add(f"unknown unit {unit} in stage {k}")

    if rec.selections and len(rec.selections) != rec.num_stages:
        report.add(f"expected {rec.num_stages} selection values, got {len(rec.selections)}")
    labels = set(spec.selection_rule.labels)
    for k, label in enumerate(rec.selections, start=1):
        if label not in labels:
            report.add(f"selection value {label!r} at stage {k} is not a rule label")

    po = rec.potential_outcomes
    if po is not None and report.ok:
        _check_consistency(rec, po, report)
    return report


def _check_consistency(rec: TrialRecord, po: pd.DataFrame, report: ValidationReport) -> None:
    for k, stage in enumerate(rec.stages, start=1):
        try:
            table = po.loc[stage.unit_ids].to_numpy(dtype=float)
        except KeyError:
            report.add(f"potential outcomes missing for units of stage {k}")
            continue
        implied = table[np.arange(len(stage)), stage.treatments.astype(int)]
        bad = ~np.isclose(implied, stage.outcomes, rtol=0.0, atol=1e-12)
        for unit in stage.unit_ids[bad].tolist():
            report.add(f"inconsistent outcome: unit {unit} in stage {k}")
