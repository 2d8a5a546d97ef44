"""Tests for bound stage mechanisms and the random-walk kernels."""

import math

import numpy as np
import pytest

from selrand.errors import InfeasibleAssignment
from selrand.sim.generators import enrichment_spec, relative_risk_spec
from selrand.trial.mechanisms import (
    Bernoulli,
    CompletelyRandomized,
    ResponseAdaptiveBernoulli,
    StageHistory,
    bind_mechanism,
    multiset_permutations,
)
from selrand.trial.spec import CRDMechanismSpec, MinRelativeRiskRuleSpec, StageSpec, TrialSpec


class TestCompletelyRandomized:
    def test_count_and_enumerate(self):
        mech = CompletelyRandomized((2, 2))
        rows = mech.enumerate()
        assert mech.count() == 6
        assert rows.shape == (6, 4)
        assert len({tuple(r) for r in rows}) == 6
        assert (rows.sum(axis=1) == 2).all()

    def test_enumeration_is_lexicographic(self):
        rows = [tuple(r) for r in CompletelyRandomized((2, 2)).enumerate()]
        assert rows == sorted(rows)

    def test_log_prob(self):
        mech = CompletelyRandomized((2, 2))
        lp = mech.log_prob(np.array([[1, 0, 1, 0], [1, 1, 1, 0]]))
        assert lp[0] == pytest.approx(-math.log(6))
        assert lp[1] == -np.inf

    def test_sample_keeps_counts(self):
        rng = np.random.default_rng(0)
        draws = CompletelyRandomized((3, 2)).sample(rng, 50)
        assert draws.dtype == np.int8
        assert (draws.sum(axis=1) == 2).all()

    def test_pinned_sample_only_moves_free_entries(self):
        rng = np.random.default_rng(1)
        current = np.array([1, 0, 1, 0, 1, 0], dtype=np.int8)
        free = np.array([True, True, True, False, False, False])
        draws = CompletelyRandomized((3, 3)).sample(rng, 100, current, free)
        assert (draws[:, 3:] == current[3:]).all()
        assert (draws[:, :3].sum(axis=1) == 2).all()

    def test_pinned_count(self):
        current = np.array([1, 0, 1, 0], dtype=np.int8)
        free = np.array([True, True, False, False])
        assert CompletelyRandomized((2, 2)).count(current, free) == 2

    def test_frozen_stage_enumerates_current(self):
        current = np.array([1, 0, 1, 0], dtype=np.int8)
        rows = CompletelyRandomized((2, 2)).enumerate(current, np.zeros(4, dtype=bool))
        assert rows.shape == (1, 4)
        assert (rows[0] == current).all()

    def test_propose_is_symmetric(self):
        mech = CompletelyRandomized((2, 2))
        x = np.array([1, 0, 1, 0], dtype=np.int8)
        y = np.array([0, 1, 1, 0], dtype=np.int8)
        n = 20000

        def hits(start, target, seed):
            rng = np.random.default_rng(seed)
            count = 0
            for _ in range(n):
                subset = rng.choice(4, size=2, replace=False)
                count += np.array_equal(mech.propose(rng, start, subset), target)
            return count

        forward, backward = hits(x, y, 5), hits(y, x, 6)
        p = 1 / 12
        se = math.sqrt(2 * n * p * (1 - p))
        assert abs(forward - backward) <= 3 * se
        assert abs(forward - n * p) <= 3 * math.sqrt(n * p * (1 - p))


class TestBernoulli:
    def test_log_prob(self):
        mech = Bernoulli(np.array([0.5, 0.25]))
        assert mech.log_prob(np.array([1, 0]))[0] == pytest.approx(math.log(0.5 * 0.75))
        assert mech.log_prob(np.array([2, 0]))[0] == -np.inf

    def test_degenerate_probability_limits_enumeration(self):
        mech = Bernoulli(np.array([0.0, 0.5, 1.0]))
        rows = mech.enumerate()
        assert mech.count() == 2
        assert (rows[:, 0] == 0).all() and (rows[:, 2] == 1).all()

    def test_frozen_stage_enumerates_current(self):
        current = np.array([0, 1, 1], dtype=np.int8)
        rows = Bernoulli(np.full(3, 0.5)).enumerate(current, np.zeros(3, dtype=bool))
        assert rows.shape == (1, 3)
        assert (rows[0] == current).all()

    def test_pinned_sample(self):
        rng = np.random.default_rng(2)
        current = np.array([1, 1, 0], dtype=np.int8)
        free = np.array([False, True, True])
        draws = Bernoulli(np.full(3, 0.5)).sample(rng, 20, current, free)
        assert (draws[:, 0] == 1).all()

    def test_pinned_draw_needs_current(self):
        with pytest.raises(ValueError):
            Bernoulli(np.full(2, 0.5)).sample(
                np.random.default_rng(0), 1, None, np.array([True, False])
            )


class TestBinding:
    def test_crd_from_fractions(self):
        spec = enrichment_spec(8, 8)
        mech = bind_mechanism(spec, 1, np.array(["low"] * 4 + ["high"] * 4), None)
        assert isinstance(mech, CompletelyRandomized)
        assert mech.counts == (4, 4)

    def test_crd_counts_per_selection(self):
        spec = TrialSpec(
            num_stages=2,
            groups=["a", "b"],
            stages=[
                StageSpec(),
                StageSpec(mechanism=CRDMechanismSpec(counts={"a": [1, 3], "b": [2, 2]})),
            ],
            selection_rule=MinRelativeRiskRuleSpec(groups=["a", "b"]),
        )
        mech = bind_mechanism(spec, 2, np.array(["a"] * 4), "a")
        assert mech.counts == (1, 3)
        with pytest.raises(InfeasibleAssignment):
            bind_mechanism(spec, 2, np.array(["a"] * 5), "a")

    def test_crd_counts_from_observed_stage(self):
        spec = TrialSpec(
            num_stages=1,
            groups=["a"],
            stages=[StageSpec()],
            selection_rule=MinRelativeRiskRuleSpec(groups=["a"]),
        )
        observed = np.array([1, 1, 1, 0], dtype=np.int8)
        assert bind_mechanism(spec, 1, np.array(["a"] * 4), None, observed).counts == (1, 3)

    def test_bernoulli_by_group(self):
        spec = relative_risk_spec(p=0.3)
        mech = bind_mechanism(spec, 1, np.array(["<=59", ">=80"]), None)
        assert isinstance(mech, Bernoulli)
        np.testing.assert_allclose(mech.p, [0.3, 0.3])


class TestAdaptive:
    def test_tilts_toward_better_arm(self):
        mech = ResponseAdaptiveBernoulli(base=0.5, gain=0.25)
        history = StageHistory(
            (np.array([1, 1, 0, 0]),), (np.array([2.0, 2.0, 0.0, 0.0]),), np.array(["a"] * 4)
        )
        assert mech.probability(history) > 0.5

    def test_no_history_uses_base(self):
        mech = ResponseAdaptiveBernoulli(base=0.4)
        assert mech.probability(StageHistory((), (), np.array([]))) == 0.4


def test_multiset_permutations():
    perms = list(multiset_permutations([1, 0, 0]))
    assert perms == [(0, 0, 1), (0, 1, 0), (1, 0, 0)]
