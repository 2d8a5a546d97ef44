"""Tests for synthetic trial generators and real-data subsampling."""

import numpy as np
import pytest

from selrand.errors import InsufficientUnits
from selrand.sim.generators import (
    SPRINT_GROUPS,
    SPRINT_SIZE,
    enrichment_spec,
    gen_enrichment_trial,
    relative_risk_spec,
    sprint_surrogate,
    subsample_two_stage,
)
from selrand.trial.record import validate_record


class TestEnrichmentTrial:
    def test_record_is_valid(self, small_enrichment_spec, small_enrichment_record):
        assert validate_record(small_enrichment_spec, small_enrichment_record).ok

    def test_stage_sizes_follow_selection(self, small_enrichment_record):
        rec = small_enrichment_record
        stage1, stage2 = rec.stages
        assert len(stage1) == 8
        assert len(stage2) == 8
        assert int(stage1.treatments.sum()) == 4
        groups2 = set(rec.units.loc[stage2.unit_ids, "group"])
        expected = {"only_low": {"low"}, "only_high": {"high"}, "both": {"low", "high"}}
        assert groups2 == expected[rec.selections[-1]]

    def test_holdout_repeats_first_selection(self, small_enrichment_record):
        s1, s2 = small_enrichment_record.selections
        assert s1 == s2

    def test_potential_outcomes_carry_the_effect(self, small_enrichment_spec):
        rec = gen_enrichment_trial(small_enrichment_spec, {"low": 0.5, "high": 2.0}, seed=1)
        po = rec.potential_outcomes
        shift = (po["y1"] - po["y0"]).to_numpy()
        groups = rec.units.loc[po.index, "group"].to_numpy()
        np.testing.assert_allclose(shift[groups == "low"], 0.5)
        np.testing.assert_allclose(shift[groups == "high"], 2.0)

    def test_deterministic(self, small_enrichment_spec):
        a = gen_enrichment_trial(small_enrichment_spec, {"low": 0.0, "high": 0.0}, seed=9)
        b = gen_enrichment_trial(small_enrichment_spec, {"low": 0.0, "high": 0.0}, seed=9)
        np.testing.assert_array_equal(a.z, b.z)
        np.testing.assert_array_equal(a.y, b.y)

    def test_selection_strata_under_the_null(self):
        spec = enrichment_spec(100, 40)
        reps = 600
        labels = [
            gen_enrichment_trial(spec, {"low": 0.0, "high": 0.0}, seed=s).selections[0]
            for s in range(reps)
        ]
        for label, target in (("only_low", 0.2), ("only_high", 0.2), ("both", 0.6)):
            freq = labels.count(label) / reps
            se = np.sqrt(target * (1 - target) / reps)
            assert abs(freq - target) <= 3 * se, label

    def test_odd_sizes_rejected(self):
        with pytest.raises(ValueError):
            enrichment_spec(7, 8)


class TestSurrogate:
    def test_schema_and_size(self):
        data = sprint_surrogate(0)
        assert len(data) == SPRINT_SIZE
        assert list(data.columns) == ["unit_id", "group", "treatment", "outcome"]
        assert set(data["group"]) == set(SPRINT_GROUPS)
        assert set(data["outcome"].unique()) <= {0.0, 1.0}

    def test_arms_balanced_within_group(self):
        data = sprint_surrogate(0, n=400)
        for _, block in data.groupby("group"):
            assert block["treatment"].sum() == len(block) // 2


class TestSubsample:
    @pytest.fixture
    def dataset(self):
        return sprint_surrogate(2, n=2000)

    def test_two_stage_record(self, dataset):
        spec = relative_risk_spec(n2=40)
        rec = subsample_two_stage(dataset, spec, 200, 40, seed=5)
        assert [len(s) for s in rec.stages] == [200, 40]
        assert validate_record(spec, rec).ok
        stage2_groups = set(rec.units.loc[rec.stages[1].unit_ids, "group"])
        assert stage2_groups == {rec.selections[0]}
        assert not set(rec.stages[0].unit_ids) & set(rec.stages[1].unit_ids)

    def test_placebo_labels_ignore_treatment(self, dataset):
        spec = relative_risk_spec(n2=40)
        controls = dataset[dataset["treatment"] == 0].drop(columns="treatment")
        rec = subsample_two_stage(controls, spec, 200, 40, seed=5, placebo_p=0.5)
        assert 0 < rec.z.sum() < len(rec.z)

    def test_too_few_units(self, dataset):
        spec = relative_risk_spec(n2=40)
        with pytest.raises(InsufficientUnits) as excinfo:
            subsample_two_stage(dataset, spec, 5000, 40, seed=0)
        assert excinfo.value.needed == 5000
        assert excinfo.value.available == 2000

    def test_too_few_in_selected_group(self, dataset):
        spec = relative_risk_spec(n2=1000)
        with pytest.raises(InsufficientUnits):
            subsample_two_stage(dataset, spec, 200, 1000, seed=0)
