"""Tests for test inversion, bisection and the Hodges-Lehmann estimate."""

import math

import numpy as np
import pytest

from selrand.errors import NoBracket, Undefined, UsageError, ZeroDenominator
from selrand.inference.confidence import (
    bisect_lower_bound,
    confidence_set,
    count_crossings,
    evaluate_curve,
    hl_estimate,
    intervals_above,
    lower_bound_bisect,
    parse_grid,
    tau_grid,
)
from selrand.inference.pvalues import ExactMethod, PValueResult, RejectionMethod


class TestGrid:
    def test_inclusive_and_exact_zero(self):
        grid = tau_grid(-1.0, 1.0, 0.1)
        assert len(grid) == 21
        assert 0.0 in grid
        assert grid[-1] == 1.0

    def test_bad_grid(self):
        with pytest.raises(ValueError):
            tau_grid(1.0, 0.0, 0.1)
        with pytest.raises(ValueError):
            tau_grid(0.0, 1.0, 0.0)

    def test_parse(self):
        assert parse_grid("-2:3:0.1") == (-2.0, 3.0, 0.1)

    @pytest.mark.parametrize("text", ["1:2", "a:b:c", "1:0:0.1", "0:1:-0.5"])
    def test_parse_rejects(self, text):
        with pytest.raises(UsageError):
            parse_grid(text)


class TestIntervals:
    def test_runs(self):
        taus = [0, 1, 2, 3, 4]
        assert intervals_above(taus, [0.05, 0.2, 0.3, 0.01, 0.5], 0.1) == [(1, 2), (4, 4)]

    def test_missing_point_ends_run(self):
        taus = [0, 1, 2, 3]
        assert intervals_above(taus, [0.5, math.nan, 0.5, 0.5], 0.1) == [(0, 0), (2, 3)]

    def test_equal_to_alpha_is_excluded(self):
        assert intervals_above([0, 1], [0.1, 0.1], 0.1) == []


class TestCurve:
    def test_gaps_are_recorded(self):
        def fn(tau, seed):
            if tau == 0.0:
                raise ZeroDenominator("no control events")
            return PValueResult(estimate=0.4, method="fake", mc_standard_error=0.01)

        pvalues, ses, gaps = evaluate_curve(fn, [-1.0, 0.0, 1.0], seed=0)
        assert math.isnan(pvalues[1])
        np.testing.assert_allclose(pvalues[[0, 2]], [0.4, 0.4])
        np.testing.assert_allclose(ses[[0, 2]], [0.01, 0.01])
        assert gaps == [(0.0, "ZeroDenominator")]

    def test_common_random_numbers(self):
        seen = []

        def fn(tau, seed):
            seen.append(seed)
            return PValueResult(estimate=0.5, method="fake")

        evaluate_curve(fn, [0.0, 1.0, 2.0], seed=3)
        assert all(s.spawn_key == seen[0].spawn_key for s in seen)

    def test_thread_count_does_not_change_curve(self, rr_spec, rr_record):
        kwargs = {
            "grid": (-0.5, 0.5, 0.25),
            "alpha": 0.1,
            "sampler": RejectionMethod(num_samples=100),
            "seed": 8,
        }
        one = confidence_set(rr_spec, rr_record, threads=1, **kwargs)
        two = confidence_set(rr_spec, rr_record, threads=2, **kwargs)
        np.testing.assert_array_equal(one.pvalues, two.pvalues)
        assert one.intervals == two.intervals

    def test_exact_set_contains_zero(self, rr_spec, rr_record):
        cs = confidence_set(
            rr_spec, rr_record, (-0.5, 0.5, 0.5), 0.1, sampler=ExactMethod(), seed=0
        )
        assert cs.pvalues[1] == pytest.approx(0.25)
        assert cs.contains(0.0)
        payload = cs.to_dict()
        assert payload["grid"] == {"lo": -0.5, "hi": 0.5, "step": 0.5}
        assert len(payload["p_curve"]) == 3

    def test_alpha_range(self, rr_spec, rr_record):
        with pytest.raises(ValueError):
            confidence_set(rr_spec, rr_record, (-1.0, 1.0, 0.5), 1.5)


class TestBisection:
    def test_finds_step(self):
        bound = bisect_lower_bound(lambda t: 0.0 if t < 0.3 else 1.0, 0.1, (0.0, 1.0), 0.01)
        assert 0.3 <= bound <= 0.31

    def test_no_bracket(self):
        with pytest.raises(NoBracket) as excinfo:
            bisect_lower_bound(lambda t: 0.5, 0.1, (0.0, 1.0), 0.01)
        assert excinfo.value.p_lo == 0.5
        assert excinfo.value.p_hi == 0.5

    def test_tolerance_must_be_positive(self):
        with pytest.raises(ValueError):
            bisect_lower_bound(lambda t: t, 0.1, (0.0, 1.0), 0.0)

    def test_on_record_no_bracket_reports_pvalues(self, rr_spec, rr_record):
        # p(0) = 0.25 already exceeds alpha, so [0, 1] is not a bracket
        with pytest.raises(NoBracket) as excinfo:
            lower_bound_bisect(rr_spec, rr_record, 0.1, (0.0, 1.0), 0.1, sampler=ExactMethod())
        assert excinfo.value.p_lo == pytest.approx(0.25)


class TestHodgesLehmann:
    def test_midpoint(self):
        assert hl_estimate([0, 1, 2, 3], [0.1, 0.4, 0.6, 0.9]) == pytest.approx(1.5)

    def test_missing_sides(self):
        with pytest.raises(Undefined) as excinfo:
            hl_estimate([0, 1], [0.6, 0.9])
        assert excinfo.value.side == "sup"
        with pytest.raises(Undefined) as excinfo:
            hl_estimate([0, 1], [0.1, 0.2])
        assert excinfo.value.side == "inf"

    def test_crossings(self):
        assert count_crossings([0.1, 0.6, 0.5, 0.4, math.nan, 0.7]) == 3
        assert count_crossings([0.1, 0.2, 0.9]) == 1
