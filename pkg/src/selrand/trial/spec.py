"""Declarative trial specification with Pydantic validation and JSON I/O.

A ``TrialSpec`` fixes everything the experimenter decides before the trial:
stage mechanisms, the selection rule, per-selection recruitment plans and
which stages are held out of the selection rule. Analysis defaults (test
statistic, comparison direction, null scope) ride along so a single JSON
document describes a complete test.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Annotated, Any, Literal

from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator
from scipy.stats import norm

from selrand.errors import SpecParseError

# Key used for the first stage's recruitment plan (S_0 is empty).
INITIAL_SELECTION = "*"


class CRDMechanismSpec(BaseModel):
    """Completely randomized design: fixed arm counts, uniform over arrangements.

    ``fractions`` splits the realized stage size across arms (remainders go
    to the lowest arms). ``counts`` pins explicit counts per previous
    selection label and takes precedence when present.
    """

    kind: Literal["crd"] = "crd"
    fractions: list[float] | None = None
    counts: dict[str, list[int]] = Field(default_factory=dict)

    @field_validator("fractions")
    @classmethod
    def check_fractions(cls, v: list[float] | None) -> list[float] | None:
        if v is None:
            return v
        if any(f < 0 for f in v) or abs(sum(v) - 1.0) > 1e-9:
            raise ValueError(f"CRD fractions must be nonnegative and sum to 1, got {v}")
        return v


class BernoulliMechanismSpec(BaseModel):
    """Independent binary assignment; P(arm 1) may depend on group and S_{k-1}."""

    kind: Literal["bernoulli"] = "bernoulli"
    p: float = Field(default=0.5, ge=0.0, le=1.0)
    p_by_group: dict[str, float] = Field(default_factory=dict)
    p_by_selection: dict[str, dict[str, float]] = Field(default_factory=dict)

    @model_validator(mode="after")
    def check_probabilities(self) -> BernoulliMechanismSpec:
        tables = [self.p_by_group, *self.p_by_selection.values()]
        for table in tables:
            for group, p in table.items():
                if not 0.0 <= p <= 1.0:
                    raise ValueError(f"probability for group {group!r} out of range: {p}")
        return self


MechanismSpec = Annotated[CRDMechanismSpec | BernoulliMechanismSpec, Field(discriminator="kind")]


class StageSpec(BaseModel):
    mechanism: MechanismSpec = Field(default_factory=CRDMechanismSpec)
    holdout: bool = False
    # previous selection label -> group -> number of recruited units
    recruitment: dict[str, dict[str, int]] = Field(default_factory=dict)


class EnrichmentRuleSpec(BaseModel):
    """Threshold rule on the scaled difference of per-group standardized ATEs."""

    name: Literal["enrichment_delta_threshold"] = "enrichment_delta_threshold"
    low_group: str = "low"
    high_group: str = "high"
    quantiles: tuple[float, float] = (0.2, 0.8)
    thresholds: tuple[float, float] | None = None

    @model_validator(mode="after")
    def fill_thresholds(self) -> EnrichmentRuleSpec:
        lo_q, hi_q = self.quantiles
        if not 0.0 < lo_q < hi_q < 1.0:
            raise ValueError(f"quantiles must satisfy 0 < lo < hi < 1, got {self.quantiles}")
        if self.thresholds is None:
            # cached at design time so selection is bit-reproducible
            self.thresholds = (float(norm.ppf(lo_q)), float(norm.ppf(hi_q)))
        elif not self.thresholds[0] < self.thresholds[1]:
            raise ValueError(f"thresholds must be increasing, got {self.thresholds}")
        return self

    @property
    def labels(self) -> tuple[str, ...]:
        return ("only_low", "only_high", "both")

    def selected_groups(self, label: str) -> tuple[str, ...]:
        return {
            "only_low": (self.low_group,),
            "only_high": (self.high_group,),
            "both": (self.low_group, self.high_group),
        }[label]


class MinRelativeRiskRuleSpec(BaseModel):
    """Select the group whose treated/control event-risk ratio is smallest."""

    name: Literal["min_relative_risk_age_group"] = "min_relative_risk_age_group"
    groups: list[str]

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(self.groups)

    def selected_groups(self, label: str) -> tuple[str, ...]:
        return (label,)


SelectionRuleSpec = Annotated[
    EnrichmentRuleSpec | MinRelativeRiskRuleSpec, Field(discriminator="name")
]


class AnalysisSpec(BaseModel):
    statistic: str = "standardized_ate_selected_groups"
    direction: Literal["less", "greater"] = "less"
    arm_pair: tuple[int, int] = (1, 0)
    null_scope: Literal["all", "selected"] = "all"

    @field_validator("arm_pair")
    @classmethod
    def distinct_arms(cls, v: tuple[int, int]) -> tuple[int, int]:
        if v[0] == v[1]:
            raise ValueError(f"arm pair must name two different arms, got {v}")
        return v


class TrialSpec(BaseModel):
    version: Literal[1] = 1
    num_stages: int = Field(ge=1)
    num_arms: int = Field(default=2, ge=2)
    groups: list[str]
    stages: list[StageSpec]
    selection_rule: SelectionRuleSpec
    analysis: AnalysisSpec = Field(default_factory=AnalysisSpec)

    @model_validator(mode="after")
    def check_structure(self) -> TrialSpec:
        if len(self.stages) != self.num_stages:
            raise ValueError(f"num_stages={self.num_stages} but {len(self.stages)} stages given")
        if self.stages[0].holdout:
            raise ValueError("the first stage cannot be held out of the selection rule")
        for l_arm in self.analysis.arm_pair:
            if not 0 <= l_arm < self.num_arms:
                raise ValueError(f"arm {l_arm} out of range for {self.num_arms} arms")
        for k, stage in enumerate(self.stages, start=1):
            mech = stage.mechanism
            if isinstance(mech, BernoulliMechanismSpec) and self.num_arms != 2:
                raise ValueError(f"stage {k}: Bernoulli mechanisms need exactly two arms")
            if isinstance(mech, CRDMechanismSpec):
                if mech.fractions is not None and len(mech.fractions) != self.num_arms:
                    raise ValueError(f"stage {k}: need {self.num_arms} CRD fractions")
                for label, counts in mech.counts.items():
                    if len(counts) != self.num_arms:
                        raise ValueError(f"stage {k}: counts for {label!r} need one per arm")
            self._check_recruitment(k, stage)
        rule = self.selection_rule
        if isinstance(rule, EnrichmentRuleSpec):
            missing = {rule.low_group, rule.high_group} - set(self.groups)
        else:
            missing = set(rule.groups) - set(self.groups)
        if missing:
            raise ValueError(f"selection rule refers to unknown groups {sorted(missing)}")
        return self

    def _check_recruitment(self, k: int, stage: StageSpec) -> None:
        plan = stage.recruitment
        if k == 1:
            expected = {INITIAL_SELECTION}
        else:
            expected = set(self.selection_rule.labels)
        if not plan:
            return
        missing = expected - set(plan)
        if missing:
            raise ValueError(f"stage {k}: recruitment plan lacks entries for {sorted(missing)}")
        for label, sizes in plan.items():
            unknown = set(sizes) - set(self.groups)
            if unknown:
                raise ValueError(f"stage {k}, {label!r}: unknown groups {sorted(unknown)}")
            if any(n < 0 for n in sizes.values()):
                raise ValueError(f"stage {k}, {label!r}: negative recruitment size")

    def recruitment_sizes(self, stage: int, previous: str | None) -> dict[str, int]:
        """Planned recruitment per group for 1-based ``stage`` given S_{stage-1}."""
        key = INITIAL_SELECTION if stage == 1 or previous is None else previous
        return dict(self.stages[stage - 1].recruitment.get(key, {}))

    def selection_stages(self, k: int) -> list[int]:
        """0-based stage indices whose data feed S_k (held-out stages excluded)."""
        return [j for j in range(k) if not self.stages[j].holdout]


def load_spec(path: str | Path) -> TrialSpec:
    """Read a TrialSpec JSON document, raising SpecParseError on any problem."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise SpecParseError(f"cannot read spec {path}: {exc}") from exc
    return parse_spec(text)


def parse_spec(text: str) -> TrialSpec:
    try:
        return TrialSpec.model_validate_json(text)
    except ValidationError as exc:
        first = exc.errors()[0]
        loc = ".".join(str(p) for p in first["loc"])
        raise SpecParseError(f"invalid trial spec at {loc or '<root>'}: {first['msg']}") from exc
    except (ValueError, json.JSONDecodeError) as exc:
        raise SpecParseError(f"invalid trial spec: {exc}") from exc


def dump_spec(spec: TrialSpec) -> str:
    return spec.model_dump_json(indent=2)


def spec_from_dict(data: dict[str, Any]) -> TrialSpec:
    try:
        return TrialSpec.model_validate(data)
    except ValidationError as exc:
        raise SpecParseError(str(exc)) from exc
