"""Kalman prediction/update steps, gain schedules, and the average filter."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from helpers import bimodal_model, random_mode, spd_matrix
from slds_mse import (
    GaussianBelief,
    InnovationSolveError,
    MeasurementModel,
    ModeModel,
    as_mode_sequence,
    average_filter_modes,
    average_mode,
    gain_schedule,
    kf_predict,
    kf_update,
    mode_schedules,
)


def scalar_mode(a, q):
    return ModeModel(np.array([[a]]), np.array([[q]]))


def scalar_meas(h=1.0, r=1.0):
    return MeasurementModel(np.array([[h]]), np.array([[r]]))


def scalar_belief(mean, cov):
    return GaussianBelief(np.array([mean]), np.array([[cov]]))


class TestSteps:
    def test_predict_scalar(self):
        pred = kf_predict(scalar_belief(1.0, 1.0), scalar_mode(0.9, 0.01))
        assert_allclose(pred.mean, [0.9], atol=1e-15)
        assert_allclose(pred.cov, [[0.82]], atol=1e-15)

    def test_update_textbook_scalar(self):
        out = kf_update(scalar_belief(0.0, 1.0), scalar_meas(1.0, 1.0),
                        np.array([2.0]))
        assert_allclose(out.gain, [[0.5]], atol=1e-15)
        assert_allclose(out.innovation_cov, [[2.0]], atol=1e-15)
        assert_allclose(out.posterior.mean, [1.0], atol=1e-15)
        assert_allclose(out.posterior.cov, [[0.5]], atol=1e-15)
        assert_allclose(out.predicted.cov, [[1.0]], atol=0)

    def test_update_huge_noise_ignores_data(self):
        out = kf_update(scalar_belief(0.3, 1.0), scalar_meas(1.0, 1e12),
                        np.array([100.0]))
        assert abs(out.gain[0, 0]) < 1e-10
        assert_allclose(out.posterior.mean, [0.3], atol=1e-8)
        assert_allclose(out.posterior.cov, [[1.0]], atol=1e-8)

    def test_update_tiny_noise_trusts_data(self, rng):
        z = 3
        pred = GaussianBelief(rng.standard_normal(z), spd_matrix(rng, z, 1.0))
        meas = MeasurementModel(np.eye(z), 1e-12 * np.eye(z))
        y = rng.standard_normal(z)
        out = kf_update(pred, meas, y)
        assert_allclose(out.posterior.mean, y, atol=1e-6)

    def test_first_step_on_benchmark(self, bench):
        pred = kf_predict(bench.init, bench.modes[0])
        assert_allclose(pred.cov, 0.82 * np.eye(4), atol=1e-15)
        out = kf_update(pred, bench.meas, np.zeros(4))
        assert_allclose(out.gain, (0.82 / 0.83) * np.eye(4), atol=1e-12)
        assert_allclose(out.posterior.cov, (0.82 * 0.01 / 0.83) * np.eye(4),
                        atol=1e-12)

    def test_gain_does_not_depend_on_data(self, rng):
        z = 2
        pred = GaussianBelief(rng.standard_normal(z), spd_matrix(rng, z, 1.0))
        meas = MeasurementModel(rng.standard_normal((z, z)) + np.eye(z),
                                spd_matrix(rng, z, 0.2))
        a = kf_update(pred, meas, rng.standard_normal(z))
        b = kf_update(pred, meas, rng.standard_normal(z))
        assert_allclose(a.gain, b.gain, atol=0)
        assert_allclose(a.posterior.cov, b.posterior.cov, atol=0)

    def test_update_never_increases_trace(self, rng):
        for _ in range(20):
            z = int(rng.integers(1, 4))
            pred = GaussianBelief(rng.standard_normal(z),
                                  spd_matrix(rng, z, 1.0))
            meas = MeasurementModel(rng.standard_normal((z, z)),
                                    spd_matrix(rng, z, 0.3))
            out = kf_update(pred, meas, rng.standard_normal(z))
            assert np.trace(out.posterior.cov) <= np.trace(pred.cov) + 1e-9

    def test_exact_prediction_gives_zero_gain(self):
        # A = 0, Q = 0 collapses the predicted covariance to zero, so the
        # update has nothing to learn from the measurement.
        mode = scalar_mode(0.0, 0.0)
        pred = kf_predict(scalar_belief(1.0, 1.0), mode)
        out = kf_update(pred, scalar_meas(1.0, 0.5), np.array([3.0]))
        assert_allclose(out.gain, [[0.0]], atol=1e-15)
        assert_allclose(out.posterior.cov, [[0.0]], atol=1e-15)

    def test_joseph_form_matches_standard(self, rng):
        z = 3
        pred = GaussianBelief(rng.standard_normal(z), spd_matrix(rng, z, 1.0))
        meas = MeasurementModel(rng.standard_normal((z, z)) + np.eye(z),
                                spd_matrix(rng, z, 0.2))
        y = rng.standard_normal(z)
        plain = kf_update(pred, meas, y)
        joseph = kf_update(pred, meas, y, joseph=True)
        assert_allclose(joseph.posterior.cov, plain.posterior.cov, atol=1e-12)
        assert_allclose(joseph.posterior.cov, joseph.posterior.cov.T, atol=0)

    def test_singular_innovation_raises(self):
        pred = scalar_belief(0.0, 0.0)
        meas = MeasurementModel(np.array([[1.0]]), np.array([[0.0]]))
        with pytest.raises(InnovationSolveError) as err:
            kf_update(pred, meas, np.array([1.0]))
        assert err.value.condition > 1e12


class TestSchedules:
    def test_schedule_length_and_first_entries(self, bench):
        sched = gain_schedule(bench.modes[0], bench.meas, bench.init, 7)
        assert len(sched) == 7
        assert len(sched.gains) == 7
        assert len(sched.covariances) == 7
        assert_allclose(sched.gains[0], (0.82 / 0.83) * np.eye(4), atol=1e-12)
        assert_allclose(sched.covariances[0], (0.82 * 0.01 / 0.83) * np.eye(4),
                        atol=1e-12)

    def test_riccati_converges_for_stable_models(self, rng):
        for _ in range(5):
            mode = random_mode(rng, 2)
            meas = MeasurementModel(np.eye(2), spd_matrix(rng, 2, 0.1))
            init = GaussianBelief(np.zeros(2), spd_matrix(rng, 2, 1.0))
            sched = gain_schedule(mode, meas, init, 60)
            traces = np.array([np.trace(c) for c in sched.covariances])
            deltas = np.abs(np.diff(traces))
            assert deltas[-1] < 1e-8
            # geometric settling after burn-in
            assert np.all(deltas[40:] <= deltas[39])

    def test_as_mode_sequence(self, bench):
        mode = bench.modes[0]
        seq = as_mode_sequence(mode, 4)
        assert len(seq) == 4 and all(m is mode for m in seq)
        explicit = [bench.modes[0], bench.modes[1], bench.modes[0]]
        assert as_mode_sequence(explicit, 3) == explicit
        with pytest.raises(ValueError):
            as_mode_sequence(explicit, 4)

    def test_mode_schedules_match_individual(self, bench):
        per_mode = mode_schedules(bench, 5)
        assert len(per_mode) == 2
        for j in (0, 1):
            single = gain_schedule(bench.modes[j], bench.meas, bench.init, 5)
            for k in range(5):
                assert_allclose(per_mode[j].gains[k], single.gains[k], atol=0)

    def test_schedule_accepts_per_step_modes(self, bench):
        seq = [bench.modes[0], bench.modes[1], bench.modes[0]]
        sched = gain_schedule(seq, bench.meas, bench.init, 3)
        assert len(sched) == 3


class TestAverageFilter:
    def test_benchmark_average_is_0p68(self, bench):
        avg = average_mode(bench, 1)
        assert_allclose(avg.A, 0.68 * np.eye(4), atol=1e-15)
        assert_allclose(avg.Q, 0.01 * np.eye(4), atol=1e-15)

    def test_average_tracks_marginals(self):
        model = bimodal_model(prior=(1.0, 0.0))
        assert_allclose(average_mode(model, 1).A, 0.9 * np.eye(4), atol=1e-15)
        assert_allclose(average_mode(model, 2).A, 0.68 * np.eye(4), atol=1e-15)

    def test_identical_modes_average_to_themselves(self):
        model = bimodal_model(a_values=(0.7, 0.7))
        assert_allclose(average_mode(model, 3).A, 0.7 * np.eye(4), atol=1e-15)

    def test_average_filter_modes_series(self, bench):
        seq = average_filter_modes(bench, 6)
        assert len(seq) == 6
        for mode in seq:
            assert_allclose(mode.A, 0.68 * np.eye(4), atol=1e-15)
