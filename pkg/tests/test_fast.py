"""Aggregate (uniform-chain) recursion and the mode-merge recommender."""

import time

import numpy as np
import pytest
from numpy.testing import assert_allclose

from helpers import bimodal_model, random_model, single_mode_model
from slds_mse import (
    DetectionModel,
    ModeModel,
    aggregate_series,
    aggregate_state_series,
    average_filter_modes,
    gain_schedule,
    merge_clusters,
    merge_recommendation,
    merged_mode,
    pair_model,
    single_mode_slds_moments,
    skf_slds_moments,
)

DET = DetectionModel(0.9)


class TestAggregateEquivalence:
    def test_skf_matches_enumeration_on_benchmark(self, bench):
        exact, _ = skf_slds_moments(bench, DET, 8)
        fast = aggregate_series(bench, DET, 8)
        assert fast.method == "aggregate"
        assert np.abs(fast.mse - exact.mse).max() <= 1e-8

    def test_all_filters_match_enumeration_on_benchmark(self, bench):
        for filt in (bench.modes[0], bench.modes[1],
                     average_filter_modes(bench, 8)):
            exact, _ = single_mode_slds_moments(bench, filt, 8)
            fast = aggregate_series(bench, None, 8, filt=filt)
            assert np.abs(fast.mse - exact.mse).max() <= 1e-8

    def test_random_bimodal_models(self, rng):
        for _ in range(8):
            model = random_model(rng, 2, int(rng.integers(1, 4)))
            exact, _ = skf_slds_moments(model, DET, 8)
            fast = aggregate_series(model, DET, 8)
            assert np.abs(fast.mse - exact.mse).max() <= 1e-8

    def test_nonuniform_prior_still_exact(self, rng):
        # Uniform transition rows are required; the prior is not.
        model = random_model(rng, 2, 2, uniform_prior=False)
        exact, _ = skf_slds_moments(model, DET, 8)
        fast = aggregate_series(model, DET, 8)
        assert np.abs(fast.mse - exact.mse).max() <= 1e-10

    def test_three_mode_model(self, rng):
        model = random_model(rng, 3, 2)
        exact, _ = skf_slds_moments(model, DET, 5, cap=9 ** 5)
        fast = aggregate_series(model, DET, 5)
        assert np.abs(fast.mse - exact.mse).max() <= 1e-8

    def test_one_mode_reduces_to_matched_filter(self):
        model = single_mode_model(z=2)
        sched = gain_schedule(model.modes[0], model.meas, model.init, 12)
        fast = aggregate_series(model, DetectionModel(0.2), 12)
        for n in range(1, 13):
            assert_allclose(fast.mse[n], np.trace(sched.covariances[n - 1]),
                            atol=1e-12)

    def test_identical_modes_have_zero_bias(self):
        model = bimodal_model(z=2, a_values=(0.7, 0.7))
        states = aggregate_state_series(model, DetectionModel(0.5), 10)
        for s in states:
            assert np.linalg.norm(s.e_mean) <= 1e-12

    def test_nonuniform_rows_rejected(self):
        model = bimodal_model(rows=np.array([[0.9, 0.1], [0.1, 0.9]]))
        with pytest.raises(ValueError, match="uniform"):
            aggregate_series(model, DET, 5)

    def test_state_series_matches_mse_series(self, bench):
        states = aggregate_state_series(bench, DET, 6)
        series = aggregate_series(bench, DET, 6)
        assert len(states) == 7
        for n, s in enumerate(states):
            assert s.step == n
            assert_allclose(np.trace(s.ee), series.mse[n], atol=1e-12)


class TestAggregateProperties:
    def test_moments_stay_psd_long_horizon(self, rng):
        for _ in range(3):
            model = random_model(rng, 2, 3)
            states = aggregate_state_series(model, DET, 200)
            for s in states[::10]:
                assert np.linalg.eigvalsh(s.ee).min() >= -1e-9
                assert np.linalg.eigvalsh(s.xx).min() >= -1e-9

    def test_mse_non_increasing_in_detection_rate(self, bench):
        curves = {p: aggregate_series(bench, DetectionModel(p), 20).mse
                  for p in (0.5, 0.7, 0.9, 1.0)}
        for n in range(3, 21):
            assert curves[1.0][n] <= curves[0.9][n] + 1e-12
            assert curves[0.9][n] <= curves[0.7][n] + 1e-12
            assert curves[0.7][n] <= curves[0.5][n] + 1e-12

    def test_runtime_under_10ms(self, rng):
        model = random_model(rng, 2, 4)
        aggregate_series(model, DET, 100)  # warm-up
        best = min(self._timed(model) for _ in range(3))
        assert best < 0.010

    @staticmethod
    def _timed(model):
        t0 = time.perf_counter()
        aggregate_series(model, DET, 100)
        return time.perf_counter() - t0


class TestMergeRecommendation:
    def test_identical_modes_merge(self):
        model = bimodal_model(a_values=(0.9, 0.9))
        rep = merge_recommendation(model, DET, 12, threshold=0.10)
        pair = rep.pairs[0]
        assert pair.merge
        assert abs(pair.improvement) <= 1e-9
        assert merge_clusters(rep) == [[1, 2]]

    def test_benchmark_pair_kept_apart(self, bench):
        rep = merge_recommendation(bench, DET, 20, threshold=0.10)
        pair = rep.pairs[0]
        assert not pair.merge
        assert pair.improvement > 0.10
        assert pair.best_single_label in ("kf-mode-1", "kf-mode-2")
        assert merge_clusters(rep) == [[1], [2]]

    def test_zero_threshold_never_merges(self):
        model = bimodal_model(a_values=(0.9, 0.9))
        rep = merge_recommendation(model, DET, 10, threshold=0.0)
        assert not rep.pairs[0].merge  # improvement 0.0 is not < 0.0

    def test_huge_threshold_merges_everything(self, bench):
        rep = merge_recommendation(bench, DET, 10, threshold=10.0)
        assert all(p.merge for p in rep.pairs)
        assert merge_clusters(rep) == [[1, 2]]

    def test_duplicated_mode_in_three_mode_model(self):
        eye = np.eye(4)
        model = bimodal_model()
        modes = (model.modes[0], ModeModel(0.9 * eye, 0.01 * eye),
                 model.modes[1])
        chain = type(model.chain)(np.full((3, 3), 1 / 3), np.full(3, 1 / 3))
        three = type(model)(modes, model.meas, chain, model.init)
        rep = merge_recommendation(three, DET, 12, threshold=0.10)
        assert len(rep.pairs) == 3
        by_pair = {(p.mode_i, p.mode_j): p.merge for p in rep.pairs}
        assert by_pair[(1, 2)] is True
        assert by_pair[(1, 3)] is False
        assert by_pair[(2, 3)] is False
        assert merge_clusters(rep) == [[1, 2], [3]]
        merged = merged_mode(three, [1, 2])
        assert_allclose(merged.A, 0.9 * eye, atol=1e-15)
        assert_allclose(merged.Q, 0.01 * eye, atol=1e-15)

    def test_perfect_detection_never_hurts(self, rng):
        det = DetectionModel(1.0)
        for _ in range(3):
            model = random_model(rng, 2, 2)
            rep = merge_recommendation(model, det, 10, threshold=0.05)
            assert rep.pairs[0].improvement >= -1e-9

    def test_metric_variants(self, bench):
        reports = {m: merge_recommendation(bench, DET, 20, 0.10, metric=m)
                   for m in ("mean", "max", "final")}
        for name, rep in reports.items():
            assert rep.metric == name
            assert rep.pairs[0].metric == name
        assert reports["max"].pairs[0].improvement >= \
            reports["mean"].pairs[0].improvement

    def test_unknown_metric_rejected(self, bench):
        with pytest.raises(ValueError):
            merge_recommendation(bench, DET, 10, 0.1, metric="median")

    def test_report_metadata(self, bench):
        rep = merge_recommendation(bench, DET, 15, threshold=0.2)
        assert rep.r == 2
        assert rep.threshold == 0.2
        assert rep.p_d == 0.9
        assert len(rep.pairs) == 1

    def test_pair_model_extraction(self, rng):
        model = random_model(rng, 3, 2)
        sub = pair_model(model, 1, 3)
        assert sub.r == 2
        assert sub.modes == (model.modes[0], model.modes[2])
        assert_allclose(sub.chain.Z, np.full((2, 2), 0.5), atol=0)
        assert_allclose(sub.chain.prior, [0.5, 0.5], atol=0)
        assert sub.meas is model.meas and sub.init is model.init
