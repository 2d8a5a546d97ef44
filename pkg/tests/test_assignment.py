"""Tests for assignment weights and enumeration of the realized space."""

import math

import numpy as np
import pytest

from selrand.errors import InfeasibleAssignment, NotImputable, SpaceTooLarge
from selrand.stats.nulls import NullSpec, impute
from selrand.trial.assignment import (
    AssignmentSpace,
    assignment_log_weight,
    bind_stage_mechanisms,
    enumerate_assignments,
)
from selrand.trial.mechanisms import ResponseAdaptiveBernoulli


class TestEnumeration:
    def test_full_space_of_toy(self, rr_spec, rr_record):
        rows = np.array(list(enumerate_assignments(rr_spec, rr_record, cap=100)))
        assert rows.shape == (36, 8)
        assert len({tuple(r) for r in rows}) == 36
        assert any(np.array_equal(r, rr_record.z) for r in rows)

    def test_stage_one_varies_slowest(self, rr_spec, rr_record):
        rows = list(enumerate_assignments(rr_spec, rr_record, cap=100))
        assert all(np.array_equal(rows[i][:4], rows[0][:4]) for i in range(6))
        assert not np.array_equal(rows[6][:4], rows[0][:4])

    def test_cap(self, rr_spec, rr_record):
        with pytest.raises(SpaceTooLarge) as excinfo:
            list(enumerate_assignments(rr_spec, rr_record, cap=10))
        assert excinfo.value.count == 36
        assert excinfo.value.cap == 10

    def test_pinned_space(self, rr_spec, rr_record):
        free = np.array([True, True, False, False, True, True, True, True])
        space = AssignmentSpace(
            tuple(bind_stage_mechanisms(rr_spec, rr_record)),
            rr_record.stage_slices,
            rr_record.z,
            free,
        )
        assert space.count() == 2 * 6
        rows = space.matrix(cap=100)
        assert (rows[:, 2:4] == rr_record.z[2:4]).all()


class TestLogWeight:
    def test_uniform_crd(self, rr_spec, rr_record):
        lw = assignment_log_weight(rr_spec, rr_record, rr_record.z)
        assert lw == pytest.approx(-2 * math.log(6))

    def test_infeasible(self, rr_spec, rr_record):
        z = rr_record.z.copy()
        z[0] = 0
        with pytest.raises(InfeasibleAssignment) as excinfo:
            assignment_log_weight(rr_spec, rr_record, z)
        assert excinfo.value.stage == 1

    def test_adaptive_override_on_observed_path(self, rr_spec, rr_record):
        mech = ResponseAdaptiveBernoulli()
        lw = assignment_log_weight(rr_spec, rr_record, rr_record.z, overrides={2: mech})
        assert math.isfinite(lw)
        assert lw != pytest.approx(-2 * math.log(6))

    def test_adaptive_override_needs_imputable_history(self, rr_spec, rr_record):
        z = rr_record.z.copy()
        z[:4] = [0, 1, 1, 0]
        with pytest.raises(NotImputable):
            assignment_log_weight(rr_spec, rr_record, z, overrides={2: ResponseAdaptiveBernoulli()})

    def test_adaptive_override_with_imputed_outcomes(self, rr_spec, rr_record):
        z = rr_record.z.copy()
        z[:4] = [0, 1, 1, 0]
        imputed = impute(rr_record, NullSpec(tau=0.0))
        lw = assignment_log_weight(
            rr_spec, rr_record, z, overrides={2: ResponseAdaptiveBernoulli()}, imputed=imputed
        )
        assert math.isfinite(lw)
