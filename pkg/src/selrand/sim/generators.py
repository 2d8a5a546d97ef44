"""Synthetic trials: the two-stage enrichment design and subsampled binary-outcome trials."""

from __future__ import annotations

import logging
from collections.abc import Mapping, Sequence

import numpy as np
import pandas as pd

from selrand.errors import InsufficientUnits
from selrand.samplers.streams import Seed, rng_for
from selrand.selection.conditioning import observed_selections
from selrand.trial.mechanisms import bind_mechanism
from selrand.trial.record import StageData, TrialRecord
from selrand.trial.spec import (
    AnalysisSpec,
    BernoulliMechanismSpec,
    CRDMechanismSpec,
    EnrichmentRuleSpec,
    MinRelativeRiskRuleSpec,
    StageSpec,
    TrialSpec,
)

logger = logging.getLogger(__name__)

ENRICHMENT_GROUPS = ("low", "high")

# age strata of the surrogate blood-pressure trial, youngest first
SPRINT_GROUPS = ("<=59", "60-69", "70-79", ">=80")
SPRINT_SIZE = 9361
# stage-1 group counts per 2000 recruited
SPRINT_SHARES = {"<=59": 408, "60-69": 710, "70-79": 608, ">=80": 274}
# (events, units) per arm, pooled over both stages of the reference subsample
SPRINT_CONTROL_RATES = {
    "<=59": (8, 195),
    "60-69": (17, 366),
    "70-79": (22, 297),
    ">=80": (36, 246),
}
SPRINT_TREATED_RATES = {
    "<=59": (12, 213),
    "60-69": (13, 344),
    "70-79": (22, 311),
    ">=80": (20, 228),
}


def enrichment_spec(
    n1: int = 100,
    n2: int = 40,
    *,
    holdout: bool = True,
    quantiles: tuple[float, float] = (0.2, 0.8),
    null_scope: str = "selected",
) -> TrialSpec:
    """Two-stage enrichment design: half of each stage on each arm.

    Stage 1 recruits n1/2 per group. Stage 2 recruits n2 from a single
    selected group, or n2/2 from each when both are selected. With
    ``holdout`` the final hypothesis is fixed after stage 1.
    """
    if n1 % 2 or n2 % 2:
        raise ValueError("stage sizes must be even")
    low, high = ENRICHMENT_GROUPS
    crd = CRDMechanismSpec(fractions=[0.5, 0.5])
    stage1 = StageSpec(mechanism=crd, recruitment={"*": {low: n1 // 2, high: n1 // 2}})
    stage2 = StageSpec(
        mechanism=crd,
        holdout=holdout,
        recruitment={
            "only_low": {low: n2},
            "only_high": {high: n2},
            "both": {low: n2 // 2, high: n2 // 2},
        },
    )
    return TrialSpec(
        num_stages=2,
        groups=list(ENRICHMENT_GROUPS),
        stages=[stage1, stage2],
        selection_rule=EnrichmentRuleSpec(low_group=low, high_group=high, quantiles=quantiles),
        analysis=AnalysisSpec(
            statistic="standardized_ate_selected_groups",
            direction="greater",
            null_scope=null_scope,
        ),
    )


def relative_risk_spec(
    groups: Sequence[str] = SPRINT_GROUPS,
    n2: int = 200,
    *,
    p: float = 0.5,
) -> TrialSpec:
    """Two-stage Bernoulli design selecting the group with the smallest risk ratio."""
    mech = BernoulliMechanismSpec(p=p)
    stage2 = StageSpec(
        mechanism=mech,
        holdout=True,
        recruitment={g: {g: n2} for g in groups},
    )
    return TrialSpec(
        num_stages=2,
        groups=list(groups),
        stages=[StageSpec(mechanism=mech), stage2],
        selection_rule=MinRelativeRiskRuleSpec(groups=list(groups)),
        analysis=AnalysisSpec(statistic="relative_risk", direction="less", null_scope="all"),
    )


def gen_enrichment_trial(
    spec: TrialSpec,
    tau_true: Mapping[str, float],
    seed: Seed,
) -> TrialRecord:
    """Simulate one trial of ``spec`` with Y(0) ~ N(0, 1) and Y(1) = Y(0) + tau_true[group].

    Recruitment follows the trial spec's plans; each stage's assignment is drawn
    from its mechanism given the selection reached so far.
    """
    rng = rng_for(seed, "enrichment")
    frames: list[pd.DataFrame] = []
    stages: list[StageData] = []
    po_rows: list[np.ndarray] = []
    next_id = 0
    previous: str | None = None
    selections: tuple[str, ...] = ()

    for k in range(1, spec.num_stages + 1):
        sizes = spec.recruitment_sizes(k, previous)
        groups = np.concatenate(
            [np.full(n, g, dtype=object) for g, n in sizes.items() if n > 0]
            or [np.empty(0, dtype=object)]
        ).astype(str)
        ids = np.arange(next_id, next_id + len(groups), dtype=np.int64)
        next_id += len(groups)
        y0 = rng.standard_normal(len(groups))
        shift = np.array([tau_true.get(g, 0.0) for g in groups], dtype=float)
        table = np.column_stack([y0, y0 + shift])
        z = bind_mechanism(spec, k, groups, previous).sample(rng, 1)[0]
        y = table[np.arange(len(ids)), z.astype(int)]

        frames.append(pd.DataFrame({"group": groups}, index=pd.Index(ids, name="unit_id")))
        stages.append(StageData(ids, z, y))
        po_rows.append(table)
        units = pd.concat(frames)
        partial = TrialRecord(units=units, stages=tuple(stages))
        selections = observed_selections(spec, partial)
        previous = selections[-1]

    po = pd.DataFrame(
        np.vstack(po_rows),
        index=units.index,
        columns=[f"y{a}" for a in range(spec.num_arms)],
    )
    rec = TrialRecord(
        units=units,
        stages=tuple(stages),
        selections=selections,
        potential_outcomes=po,
        metadata={"tau_true": dict(tau_true)},
    )
    logger.debug("generated trial with selections %s", "/".join(selections))
    return rec


def _largest_remainder(total: int, weights: Mapping[str, float]) -> dict[str, int]:
    keys = list(weights)
    raw = np.array([weights[k] for k in keys], dtype=float)
    raw = raw / raw.sum() * total
    base = np.floor(raw).astype(int)
    order = np.argsort(-(raw - base), kind="stable")
    base[order[: total - int(base.sum())]] += 1
    return dict(zip(keys, base.tolist()))


def sprint_surrogate(seed: Seed, n: int = SPRINT_SIZE) -> pd.DataFrame:
    """Synthetic binary-outcome trial with the age-group schema of the blood-pressure study.

    Group sizes follow the stage-1 shares, each group is split evenly
    between arms, and events are Bernoulli at the per-arm group rates.
    Columns: unit_id, group, treatment, outcome.
    """
    rng = rng_for(seed, "sprint")
    sizes = _largest_remainder(n, SPRINT_SHARES)
    parts = []
    for g in SPRINT_GROUPS:
        size = sizes[g]
        treatment = rng.permutation(np.arange(size) < size // 2).astype(np.int8)
        e_c, n_c = SPRINT_CONTROL_RATES[g]
        e_t, n_t = SPRINT_TREATED_RATES[g]
        rate = np.where(treatment == 1, e_t / n_t, e_c / n_c)
        outcome = (rng.random(size) < rate).astype(float)
        parts.append(pd.DataFrame({"group": g, "treatment": treatment, "outcome": outcome}))
    data = pd.concat(parts, ignore_index=True)
    data.insert(0, "unit_id", np.arange(len(data), dtype=np.int64))
    return data


def subsample_two_stage(
    dataset: pd.DataFrame,
    spec: TrialSpec,
    n1: int,
    n2: int,
    seed: Seed,
    *,
    placebo_p: float | None = None,
) -> TrialRecord:
    """Hypothetical two-stage trial drawn without replacement from ``dataset``.

    Stage 1 takes ``n1`` units at random; the selection rule picks groups
    from stage-1 data, and stage 2 takes ``n2`` further units from the
    selected groups. With ``placebo_p`` every recruited unit gets a fresh
    Bernoulli(placebo_p) label instead of its recorded treatment.
    """
    required = {"unit_id", "group", "outcome"} | ({"treatment"} if placebo_p is None else set())
    missing = required - set(dataset.columns)
    if missing:
        raise ValueError(f"dataset lacks columns {sorted(missing)}")
    if len(dataset) < n1:
        raise InsufficientUnits("*", n1, len(dataset))
    rng = rng_for(seed, "subsample")
    data = dataset.set_index("unit_id", drop=False)

    first = data.iloc[np.sort(rng.choice(len(data), size=n1, replace=False))]
    z1 = _labels(first, placebo_p, rng)
    units = _units_table(data)
    stage1 = StageData(first["unit_id"].to_numpy(), z1, first["outcome"].to_numpy(dtype=float))
    partial = TrialRecord(units=units, stages=(stage1,))
    s1 = observed_selections(spec, partial)[0]

    chosen = set(spec.selection_rule.selected_groups(s1))
    pool = data[data["group"].astype(str).isin(chosen) & ~data.index.isin(first.index)]
    if len(pool) < n2:
        raise InsufficientUnits(",".join(sorted(chosen)), n2, len(pool))
    second = pool.iloc[np.sort(rng.choice(len(pool), size=n2, replace=False))]
    z2 = _labels(second, placebo_p, rng)
    stage2 = StageData(second["unit_id"].to_numpy(), z2, second["outcome"].to_numpy(dtype=float))

    recruited = np.concatenate([stage1.unit_ids, stage2.unit_ids])
    rec = TrialRecord(units=units.loc[recruited], stages=(stage1, stage2))
    return rec.with_selections(observed_selections(spec, rec))


def _labels(rows: pd.DataFrame, placebo_p: float | None, rng: np.random.Generator) -> np.ndarray:
    if placebo_p is None:
        return rows["treatment"].to_numpy(dtype=np.int8)
    return (rng.random(len(rows)) < placebo_p).astype(np.int8)


def _units_table(data: pd.DataFrame) -> pd.DataFrame:
    extra = [c for c in data.columns if c not in ("unit_id", "treatment", "outcome")]
    units = data[extra].copy()
    units["group"] = units["group"].astype(str)
    units.index.name = "unit_id"
    return units
