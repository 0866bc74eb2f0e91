from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from crewload import perfmodel as pm

EXP_MINUS_2 = 0.1353352832366127  # exp(-2), frozen closed-form point


class TestWorkloadValidation:
    def test_in_range_passthrough(self):
        assert pm.workload(0.25) == 0.25

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            pm.workload(1.2)
        with pytest.raises(ValueError):
            pm.workload(-0.01)

    def test_clamp_flag(self):
        assert pm.workload(1.7, clamp=True) == 1.0
        assert pm.workload(-3.0, clamp=True) == 0.0

    def test_nan_rejected(self):
        with pytest.raises(ValueError):
            pm.workload(float("nan"), clamp=True)

    def test_isa_score_admissible_values(self):
        assert [pm.isa_score(v) for v in (-2, -1, 0, 1, 2)] == [-2, -1, 0, 1, 2]
        for bad in (-3, 3, 0.5):
            with pytest.raises(ValueError):
                pm.isa_score(bad)


class TestChannelParams:
    def test_defaults_peak_normalized(self):
        p = pm.ChannelParams()
        assert p.amplitude == pytest.approx(0.2 * math.sqrt(2 * math.pi))

    def test_invalid_sigma_amplitude(self):
        with pytest.raises(ValueError):
            pm.ChannelParams(sigma=0.0)
        with pytest.raises(ValueError):
            pm.ChannelParams(amplitude=-1.0)

    def test_weights_must_sum_to_one(self):
        with pytest.raises(ValueError):
            pm.PerformanceModel(objective_weight=0.6, subjective_weight=0.6)
        pm.PerformanceModel(objective_weight=0.7, subjective_weight=0.3)


class TestPerformanceCurve:
    def test_peak_is_one_with_normalizing_amplitude(self):
        p = pm.ChannelParams(mu=0.5, sigma=0.2)
        assert pm.performance_curve(0.5, p) == pytest.approx(1.0, abs=1e-9)

    def test_symmetry_around_peak(self):
        p = pm.ChannelParams(mu=0.4, sigma=0.15)
        for d in (0.05, 0.1, 0.3):
            assert pm.performance_curve(0.4 - d, p) == pytest.approx(
                pm.performance_curve(0.4 + d, p), abs=1e-12
            )

    def test_closed_form_point(self):
        p = pm.ChannelParams(mu=0.5, sigma=0.2)
        assert pm.performance_curve(0.9, p) == pytest.approx(EXP_MINUS_2, abs=1e-9)

    def test_unimodal_on_grid(self):
        p = pm.ChannelParams(mu=0.5, sigma=0.2)
        grid = np.linspace(0.0, 1.0, 201)
        values = [pm.performance_curve(s, p) for s in grid]
        peak = int(np.argmax(values))
        assert grid[peak] == pytest.approx(0.5, abs=0.01)
        assert all(values[i] < values[i + 1] for i in range(peak))
        assert all(values[i] > values[i + 1] for i in range(peak, len(values) - 1))

    @given(st.floats(0.05, 0.95), st.floats(0.01, 1.0), st.floats(0.0, 1.0))
    def test_amplitude_scales_output_linearly(self, mu, sigma, s):
        base = pm.ChannelParams(mu=mu, sigma=sigma)
        scaled = pm.ChannelParams(mu=mu, sigma=sigma, amplitude=base.amplitude * 3.0)
        assert pm.performance_curve(s, scaled) == pytest.approx(
            3.0 * pm.performance_curve(s, base), rel=1e-12
        )


class TestCalibrateAmplitude:
    def test_triangle(self):
        assert pm.calibrate_amplitude([(0, 0), (1, 1)]) == pytest.approx(0.5)

    def test_unit_rectangle(self):
        assert pm.calibrate_amplitude([(0, 1), (1, 1)]) == pytest.approx(1.0)

    def test_two_trapezoids(self):
        assert pm.calibrate_amplitude([(0, 0), (0.5, 1), (1, 0)]) == pytest.approx(0.5)

    def test_errors(self):
        with pytest.raises(ValueError):
            pm.calibrate_amplitude([(0, 0)])
        with pytest.raises(ValueError):
            pm.calibrate_amplitude([(0, 0), (0, 1)])
        with pytest.raises(ValueError):
            pm.calibrate_amplitude([(0.5, 0), (0.2, 1)])

    def test_refinement_is_second_order(self):
        # integral of x^2 on [0,1] is 1/3; halving the step must cut the
        # error by at least 3x (O(h^2) would give ~4x).
        def err(m: int) -> float:
            xs = [i / m for i in range(m + 1)]
            samples = [(x, x * x) for x in xs]
            return abs(pm.calibrate_amplitude(samples) - 1.0 / 3.0)

        e8, e16, e32 = err(8), err(16), err(32)
        assert e8 / e16 >= 3.0
        assert e16 / e32 >= 3.0


class TestIsaMapping:
    @pytest.mark.parametrize("score,expected", [(-2, 0.0), (-1, 0.25), (0, 0.5), (1, 0.75), (2, 1.0)])
    def test_affine_map(self, score, expected):
        assert pm.isa_to_workload(score) == pytest.approx(expected)


class TestFusion:
    def test_mean_of_channels_at_equal_weights(self, model):
        # P_obj=0.8 and P_subj=0.6 at 0.5/0.5 weights -> 0.7; realized via
        # workloads chosen to hit those curve values.
        s_obj = 0.5 + 0.2 * math.sqrt(-2 * math.log(0.8))
        s_subj = 0.5 + 0.2 * math.sqrt(-2 * math.log(0.6))
        assert pm.operator_performance(s_subj, s_obj, model) == pytest.approx(0.7, abs=1e-12)

    def test_peak_when_both_channels_at_mu(self, model):
        assert pm.operator_performance(0.5, 0.5, model) == pytest.approx(1.0, abs=1e-9)

    def test_mixed_channel_point(self, model):
        expected = 0.5 * EXP_MINUS_2 + 0.5 * 1.0
        assert pm.operator_performance(0.5, 0.9, model) == pytest.approx(expected, abs=1e-9)

    @given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
    def test_fusion_stays_in_channel_hull(self, s_subj, s_obj, w):
        model = pm.PerformanceModel(objective_weight=w, subjective_weight=1.0 - w)
        p_subj = pm.performance_curve(s_subj, model.subjective)
        p_obj = pm.performance_curve(s_obj, model.objective)
        fused = pm.operator_performance(s_subj, s_obj, model)
        assert min(p_subj, p_obj) - 1e-12 <= fused <= max(p_subj, p_obj) + 1e-12


class TestTeamPerformance:
    def test_examples(self):
        assert pm.team_performance([0.7]) == pytest.approx(0.7)
        assert pm.team_performance([0.6, 0.8]) == pytest.approx(0.7)
        assert pm.team_performance([1.0, 0.0, 0.5]) == pytest.approx(0.5)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            pm.team_performance([])


class TestStateTransition:
    def test_identity_at_zero_delta(self):
        assert pm.predict_next_state(0.5, 0.0) == 0.5

    def test_additive(self):
        assert pm.predict_next_state(0.5, 0.1) == pytest.approx(0.6)

    def test_clamps(self):
        assert pm.predict_next_state(0.95, 0.2) == 1.0
        assert pm.predict_next_state(0.05, -0.2) == 0.0

    @given(st.floats(0, 1), st.floats(-2, 2), st.floats(-2, 2))
    def test_monotone_in_delta(self, s, d1, d2):
        lo, hi = sorted((d1, d2))
        assert pm.predict_next_state(s, lo) <= pm.predict_next_state(s, hi)


class TestNextPerformance:
    def test_zero_delta_equals_current(self, model):
        current = pm.operator_performance(0.3, 0.8, model)
        assert pm.predict_next_performance(0.3, 0.8, 0.0, model) == pytest.approx(current)

    def test_landing_on_peak(self, model):
        assert pm.predict_next_performance(0.3, 0.3, 0.2, model) == pytest.approx(1.0, abs=1e-9)

    def test_closed_form_point(self, model):
        assert pm.predict_next_performance(0.7, 0.7, 0.2, model) == pytest.approx(
            EXP_MINUS_2, abs=1e-9
        )


class TestArgmaxInvariance:
    @given(st.floats(0.1, 10.0))
    def test_scaling_amplitude_preserves_comparator_argmax(self, c):
        rng = np.random.default_rng(7)
        base = pm.ChannelParams(mu=0.5, sigma=0.2)
        scaled = pm.ChannelParams(mu=0.5, sigma=0.2, amplitude=base.amplitude * c)
        candidates = rng.uniform(0, 1, size=12)
        base_vals = [pm.performance_curve(s, base) for s in candidates]
        scaled_vals = [pm.performance_curve(s, scaled) for s in candidates]
        assert int(np.argmax(base_vals)) == int(np.argmax(scaled_vals))
        for b, s in zip(base_vals, scaled_vals):
            assert s == pytest.approx(c * b, rel=1e-12)
