"""Schedules, noise models, streams and trajectory bookkeeping."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from minmaxlab import (NoiseModel, StepSchedule, Trajectory, derive_rng,
                       draw_noise, validate_schedule)
from minmaxlab.core import ScheduleError


class TestScheduleValue:
    def test_power_direct_formula(self):
        assert StepSchedule.power(1.0, 1.0).value(4) == 0.25

    def test_power_with_sampling_radius(self):
        s = StepSchedule.power(1.0, 1.0, sampling_radius=StepSchedule.power(1.0, 1.0 / 3.0))
        gamma, delta = s.gamma_delta(8)
        assert gamma == 0.125
        assert delta == pytest.approx(0.5, abs=1e-15)

    def test_constant_far_out(self):
        assert StepSchedule.constant(0.01).value(10 ** 6) == 0.01

    def test_explicit_sequence(self):
        s = StepSchedule.explicit([0.5, 0.25, 0.125])
        assert s.value(2) == 0.25
        with pytest.raises(ScheduleError):
            s.value(4)

    def test_invalid_parameters_rejected_at_construction(self):
        with pytest.raises(ScheduleError):
            StepSchedule.power(-1.0, 1.0)
        with pytest.raises(ScheduleError):
            StepSchedule.power(1.0, 0.0)
        with pytest.raises(ScheduleError):
            StepSchedule.constant(0.0)
        with pytest.raises(ScheduleError):
            StepSchedule.explicit([0.1, -0.1])

    @given(A=st.floats(0.01, 10.0), p=st.floats(0.01, 2.0), n=st.integers(1, 10 ** 6))
    @settings(max_examples=50, deadline=None)
    def test_power_formula_property(self, A, p, n):
        assert StepSchedule.power(A, p).value(n) == pytest.approx(A / n ** p)

    def test_divergent_step_sum_for_p_at_most_one(self):
        # sum gamma_n = inf for power schedules with 0 < p <= 1: partial sums keep growing
        for p in (0.5, 1.0):
            s = StepSchedule.power(1.0, p)
            partial = np.cumsum(s.prefix(10 ** 5))
            assert partial[-1] > partial[10 ** 4] + 1.0


class TestValidateSchedule:
    def test_one_over_n_with_declared_witnesses(self):
        s = StepSchedule.power(1.0, 1.0, witness=(1.0, 2.0, 0.5))
        rep = validate_schedule(s, 10 ** 4)
        assert rep.satisfies_prop1_window
        assert rep.witness_constants == (1.0, 2.0, 0.5)

    def test_constant_step_fails_window(self):
        rep = validate_schedule(StepSchedule.constant(0.01), 10 ** 4)
        assert not rep.satisfies_prop1_window
        assert not rep.upper_ok

    def test_inverse_sqrt_fails_upper_bound(self):
        s = StepSchedule.power(1.0, 0.5, witness=(None, None, 0.5))
        rep = validate_schedule(s, 10 ** 4)
        assert not rep.satisfies_prop1_window
        assert not rep.upper_ok

    def test_zeroth_order_summability(self):
        good = StepSchedule.power(1.0, 1.0, sampling_radius=StepSchedule.power(1.0, 1.0 / 3.0))
        assert validate_schedule(good, 10 ** 4).zeroth_order_summable is True
        # gamma^2/delta^2 = 1/n is not summable
        bad = StepSchedule.power(1.0, 0.75, sampling_radius=StepSchedule.power(1.0, 0.25))
        assert validate_schedule(bad, 10 ** 4).zeroth_order_summable is False

    def test_report_only_no_exception(self):
        rep = validate_schedule(StepSchedule.power(3.0, 1.0), 100)
        assert rep.witness_constants[0] > 0


class TestNoise:
    def test_none_returns_zeros(self):
        rng = derive_rng(0)
        assert np.array_equal(draw_noise(NoiseModel.none(), 2, rng), np.zeros(2))

    def test_gaussian_law_of_large_numbers(self):
        rng = derive_rng(123)
        model = NoiseModel.gaussian(0.1)
        draws = model.draw_many(rng, 10 ** 5, 2)
        bound = 3 * 0.1 / np.sqrt(10 ** 5)
        assert np.all(np.abs(draws.mean(axis=0)) <= bound)

    def test_gaussian_total_variance_split(self):
        # trace of the sample covariance approximates sigma^2 regardless of dim
        for dim in (1, 2, 4):
            rng = derive_rng(7)
            draws = NoiseModel.gaussian(0.3).draw_many(rng, 10 ** 5, dim)
            trace = float(np.sum(draws.var(axis=0)))
            assert abs(trace - 0.09) <= 5 * 0.09 / np.sqrt(10 ** 5)

    def test_bounded_uniform_is_bounded(self):
        rng = derive_rng(5)
        model = NoiseModel.bounded_uniform(0.5)
        draws = model.draw_many(rng, 2000, 2)
        assert np.all(np.linalg.norm(draws, axis=1) <= 0.5 + 1e-15)
        assert np.all(np.abs(draws.mean(axis=0)) < 0.02)

    def test_invalid_parameters(self):
        from minmaxlab.core import NoiseError
        with pytest.raises(NoiseError):
            NoiseModel.gaussian(0.0)
        with pytest.raises(NoiseError):
            NoiseModel.bounded_uniform(-1.0)


class TestStreams:
    def test_same_seed_same_stream(self):
        a = derive_rng(42).normal(size=16)
        b = derive_rng(42).normal(size=16)
        assert np.array_equal(a, b)

    def test_run_indices_give_distinct_streams(self):
        a = derive_rng(42, 0).normal(size=8)
        b = derive_rng(42, 1).normal(size=8)
        assert not np.array_equal(a, b)

    def test_batched_draws_match_sequential_draws(self):
        model = NoiseModel.gaussian(1.0)
        rng1 = derive_rng(9)
        batch = model.draw_many(rng1, 6, 2)
        rng2 = derive_rng(9)
        seq = np.stack([model.draw(rng2, 2) for _ in range(6)])
        assert np.array_equal(batch, seq)


class TestTrajectory:
    def test_effective_time_increments_equal_steps(self):
        from minmaxlab import SGDA, make_bilinear, run
        traj = run(SGDA(), make_bilinear(), [1.0, 0.0],
                   StepSchedule.power(1.0, 1.0), NoiseModel.none(), horizon=50)
        assert np.allclose(np.diff(traj.effective_times), traj.step_values[1:],
                           rtol=0, atol=1e-12)
        assert traj.effective_times[0] == 0.0

    def test_lengths_and_monotonicity_enforced(self):
        with pytest.raises(ValueError):
            Trajectory(iterates=np.zeros((3, 2)), effective_times=np.array([0.0, 1.0]),
                       step_values=np.zeros(3), d1=1, d2=1)
        with pytest.raises(ValueError):
            Trajectory(iterates=np.zeros((3, 2)), effective_times=np.array([0.0, 2.0, 1.0]),
                       step_values=np.zeros(3), d1=1, d2=1)
