"""Shared toy trials.

The relative-risk toy has two stages of four units, each a 2/2 completely
randomized design, so the full assignment space has 6 x 6 = 36 elements.
Stage 2 is held out of the selection rule. Observed data:

  unit  stage  group  z  y
  0     1      a      1  0
  1     1      a      0  1
  2     1      b      1  1
  3     1      b      0  1
  4-7   2      a      1 1 0 0 / 0 1 1 1

Group a has risk ratio 0 in stage 1 and b has 1, so both selection values
are "a". Four of the six stage-1 arrangements select "a", giving a
24-element reference set under the sharp null.
"""

import numpy as np
import pandas as pd
import pytest

from selrand.inference.problem import SelectiveProblem
from selrand.selection.conditioning import observed_selections
from selrand.sim.generators import enrichment_spec, gen_enrichment_trial
from selrand.stats.nulls import NullSpec
from selrand.trial.record import StageData, TrialRecord
from selrand.trial.spec import (
    AnalysisSpec,
    CRDMechanismSpec,
    MinRelativeRiskRuleSpec,
    StageSpec,
    TrialSpec,
)


@pytest.fixture
def rr_spec() -> TrialSpec:
    crd = CRDMechanismSpec(fractions=[0.5, 0.5])
    return TrialSpec(
        num_stages=2,
        groups=["a", "b"],
        stages=[
            StageSpec(mechanism=crd, recruitment={"*": {"a": 2, "b": 2}}),
            StageSpec(mechanism=crd, holdout=True, recruitment={"a": {"a": 4}, "b": {"b": 4}}),
        ],
        selection_rule=MinRelativeRiskRuleSpec(groups=["a", "b"]),
        analysis=AnalysisSpec(statistic="relative_risk", direction="less", null_scope="all"),
    )


@pytest.fixture
def rr_record(rr_spec: TrialSpec) -> TrialRecord:
    units = pd.DataFrame(
        {"group": ["a", "a", "b", "b", "a", "a", "a", "a"]},
        index=pd.Index(range(8), name="unit_id"),
    )
    rec = TrialRecord(
        units=units,
        stages=(
            StageData(np.array([0, 1, 2, 3]), np.array([1, 0, 1, 0]), np.array([0, 1, 1, 1.0])),
            StageData(np.array([4, 5, 6, 7]), np.array([1, 1, 0, 0]), np.array([0, 1, 1, 1.0])),
        ),
    )
    return rec.with_selections(observed_selections(rr_spec, rec))


@pytest.fixture
def small_enrichment_spec() -> TrialSpec:
    return enrichment_spec(8, 8)


@pytest.fixture
def small_enrichment_record(small_enrichment_spec: TrialSpec) -> TrialRecord:
    return gen_enrichment_trial(small_enrichment_spec, {"low": 0.0, "high": 1.0}, seed=3)


@pytest.fixture
def rr_problem(rr_spec: TrialSpec, rr_record: TrialRecord) -> SelectiveProblem:
    return SelectiveProblem.build(rr_spec, rr_record, NullSpec(tau=0.0))
