"""Trajectory enumeration: probabilities, exact moments, pruning, caps."""

import itertools

import numpy as np
import pytest
from numpy.testing import assert_allclose

from helpers import bimodal_model, random_model, single_mode_model
from slds_mse import (
    DetectionModel,
    EnumerationCapError,
    MarkovChain,
    Trajectory,
    TrajectoryPair,
    average_filter_modes,
    detection_prob,
    gain_schedule,
    mismatch_init,
    mismatch_series,
    mismatch_step,
    mode_schedules,
    pruned_moments,
    single_mode_slds_moments,
    skf_slds_moments,
    trajectory_prob,
)

DET = DetectionModel(0.9)


def brute_single(model, filt, n_steps, rng=None):
    """Mixture of per-trajectory moments over all mode sequences, computed
    with mismatch_step directly.  Optionally visits trajectories in a
    shuffled order so agreement with the engine also proves order
    invariance of the aggregation."""
    z = model.z
    sched = gain_schedule(filt, model.meas, model.init, n_steps)
    seqs = list(itertools.product(range(1, model.r + 1), repeat=n_steps))
    if rng is not None:
        rng.shuffle(seqs)
    e_tot = np.zeros((n_steps + 1, z))
    ee_tot = np.zeros((n_steps + 1, z, z))
    for seq in seqs:
        w = trajectory_prob(model.chain, seq)
        state = mismatch_init(model.init)
        states = [state]
        for k, mode_idx in enumerate(seq):
            state = mismatch_step(state, model.modes[mode_idx - 1], filt,
                                  model.meas, sched.gains[k])
            states.append(state)
        for n, s in enumerate(states):
            e_tot[n] += w * s.e_mean
            ee_tot[n] += w * (s.e_cov + np.outer(s.e_mean, s.e_mean))
    return e_tot, ee_tot


def brute_skf(model, det, n_steps, rng=None, diagonal_only=False):
    """Same oracle for the switching filter: mixture over (true, detected)
    sequence pairs weighted by trajectory_prob times detection_prob."""
    z = model.z
    scheds = mode_schedules(model, n_steps)
    seqs = list(itertools.product(range(1, model.r + 1), repeat=n_steps))
    pairs = [(l, q) for l in seqs for q in seqs
             if not diagonal_only or l == q]
    if rng is not None:
        rng.shuffle(pairs)
    e_tot = np.zeros((n_steps + 1, z))
    ee_tot = np.zeros((n_steps + 1, z, z))
    for truth_seq, det_seq in pairs:
        w = trajectory_prob(model.chain, truth_seq)
        if not diagonal_only:
            w *= detection_prob(truth_seq, det_seq, det, model.r)
        if w == 0.0:
            continue
        state = mismatch_init(model.init)
        states = [state]
        for k in range(n_steps):
            i, j = truth_seq[k] - 1, det_seq[k] - 1
            state = mismatch_step(state, model.modes[i], model.modes[j],
                                  model.meas, scheds[j].gains[k])
            states.append(state)
        for n, s in enumerate(states):
            e_tot[n] += w * s.e_mean
            ee_tot[n] += w * (s.e_cov + np.outer(s.e_mean, s.e_mean))
    return e_tot, ee_tot


class TestTrajectoryProb:
    CHAIN = MarkovChain(np.array([[0.9, 0.1], [0.2, 0.8]]),
                        np.array([1.0, 0.0]))

    def test_worked_example(self):
        assert_allclose(trajectory_prob(self.CHAIN, [1, 2, 2]), 0.08,
                        atol=1e-15)

    def test_uniform_chain_is_half_power_n(self, bench):
        for n in (1, 3, 6):
            for seq in itertools.product((1, 2), repeat=n):
                assert_allclose(trajectory_prob(bench.chain, seq), 0.5 ** n,
                                atol=1e-15)

    def test_identity_chain(self):
        chain = MarkovChain(np.eye(2), np.array([1.0, 0.0]))
        assert trajectory_prob(chain, [1, 1, 1]) == 1.0
        assert trajectory_prob(chain, [1, 2]) == 0.0
        assert trajectory_prob(chain, [2]) == 0.0

    def test_empty_and_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            trajectory_prob(self.CHAIN, [])
        with pytest.raises(ValueError):
            trajectory_prob(self.CHAIN, [0, 1])
        with pytest.raises(ValueError):
            trajectory_prob(self.CHAIN, [1, 3])

    def test_mass_sums_to_one(self):
        for n in (1, 4, 8):
            total = sum(trajectory_prob(self.CHAIN, seq)
                        for seq in itertools.product((1, 2), repeat=n))
            assert_allclose(total, 1.0, atol=1e-12)


class TestDetectionProb:
    def test_worked_example(self):
        p = detection_prob([1, 2, 1], [1, 1, 1], DET, r=2)
        assert_allclose(p, 0.9 * 0.1 * 0.9, atol=1e-15)

    def test_coin_flip_rate(self):
        det = DetectionModel(0.5)
        for q in itertools.product((1, 2), repeat=3):
            assert_allclose(detection_prob((1, 1, 1), q, det, r=2), 0.5 ** 3,
                            atol=1e-15)

    def test_perfect_detection(self):
        det = DetectionModel(1.0)
        assert detection_prob([1, 2], [1, 2], det, r=2) == 1.0
        assert detection_prob([1, 2], [1, 1], det, r=2) == 0.0

    def test_single_mode_always_detected(self):
        det = DetectionModel(0.3)
        assert detection_prob([1, 1], [1, 1], det, r=1) == 1.0
        with pytest.raises(ValueError):
            detection_prob([1, 1], [1, 2], det, r=1)

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            detection_prob([1, 2], [1], DET, r=2)

    def test_mass_sums_to_one(self):
        truth = (1, 2, 2, 1)
        total = sum(detection_prob(truth, q, DET, r=2)
                    for q in itertools.product((1, 2), repeat=4))
        assert_allclose(total, 1.0, atol=1e-12)


class TestExactMoments:
    def test_single_filter_matches_brute_force(self, rng):
        model = random_model(rng, 2, 2, uniform_rows=False,
                             uniform_prior=False)
        series, moments = single_mode_slds_moments(model, model.modes[0], 4)
        e_ref, ee_ref = brute_single(model, model.modes[0], 4, rng)
        for n in range(5):
            assert_allclose(moments[n].e_mean, e_ref[n], atol=1e-12)
            implied = moments[n].e_cov + np.outer(moments[n].e_mean,
                                                  moments[n].e_mean)
            assert_allclose(implied, ee_ref[n], atol=1e-12)
            assert_allclose(series.mse[n], np.trace(ee_ref[n]), atol=1e-12)

    def test_skf_matches_brute_force(self, rng):
        model = random_model(rng, 2, 2, uniform_rows=False,
                             uniform_prior=False)
        series, moments = skf_slds_moments(model, DET, 4)
        e_ref, ee_ref = brute_skf(model, DET, 4, rng)
        for n in range(5):
            assert_allclose(moments[n].e_mean, e_ref[n], atol=1e-12)
            assert_allclose(series.mse[n], np.trace(ee_ref[n]), atol=1e-12)

    def test_degenerate_chain_reduces_to_fixed_mode(self):
        # Chain locked to mode 1 with an identity transition matrix: the
        # switching system is a plain linear system, so enumeration must
        # reproduce the direct mismatched-filter recursion.
        model = bimodal_model(z=2, prior=(1.0, 0.0), rows=np.eye(2))
        series, _ = single_mode_slds_moments(model, model.modes[1], 8)
        _, direct = mismatch_series(model.modes[0], model.modes[1],
                                    model.meas, model.init, 8)
        assert_allclose(series.mse, direct.mse, atol=1e-10)

    def test_one_mode_skf_is_matched_filter(self):
        model = single_mode_model(z=2)
        series, moments = skf_slds_moments(model, DetectionModel(0.3), 10)
        sched = gain_schedule(model.modes[0], model.meas, model.init, 10)
        for n in range(1, 11):
            assert_allclose(series.mse[n], np.trace(sched.covariances[n - 1]),
                            atol=1e-12)
            assert_allclose(moments[n].e_mean, np.zeros(2), atol=1e-12)

    def test_perfect_detection_keeps_only_diagonal_pairs(self, bench):
        det = DetectionModel(1.0)
        series, moments = skf_slds_moments(bench, det, 4)
        e_ref, ee_ref = brute_skf(bench, det, 4, diagonal_only=True)
        for n in range(5):
            assert_allclose(series.mse[n], np.trace(ee_ref[n]), atol=1e-12)
            # matched per-step dynamics mean the bias term never activates
            assert_allclose(moments[n].e_mean, np.zeros(4), atol=1e-15)

    def test_indistinguishable_modes_equal_matched_filter(self):
        model = bimodal_model(z=2, a_values=(0.7, 0.7))
        sched = gain_schedule(model.modes[0], model.meas, model.init, 6)
        for p_d in (0.4, 1.0):
            series, _ = skf_slds_moments(model, DetectionModel(p_d), 6)
            for n in range(1, 7):
                assert_allclose(series.mse[n],
                                np.trace(sched.covariances[n - 1]), atol=1e-12)

    def test_exact_mass_is_one(self, rng):
        scalar = bimodal_model(z=1)
        for n_steps in (1, 4, 8):
            s, _ = single_mode_slds_moments(scalar, scalar.modes[0], n_steps)
            assert np.abs(s.kept_mass - 1.0).max() <= 1e-10
            s, _ = skf_slds_moments(scalar, DET, n_steps)
            assert np.abs(s.kept_mass - 1.0).max() <= 1e-10
        three = random_model(rng, 3, 1, uniform_rows=False,
                             uniform_prior=False)
        s, _ = single_mode_slds_moments(three, three.modes[0], 8)
        assert np.abs(s.kept_mass - 1.0).max() <= 1e-10
        s, _ = skf_slds_moments(three, DET, 6, cap=9 ** 6)
        assert np.abs(s.kept_mass - 1.0).max() <= 1e-10

    def test_average_filter_sequence_accepted(self, bench):
        avg = average_filter_modes(bench, 5)
        series, _ = single_mode_slds_moments(bench, avg, 5)
        assert len(series) == 6
        assert np.abs(series.kept_mass - 1.0).max() <= 1e-12

    def test_second_moment_psd(self, rng):
        for _ in range(5):
            model = random_model(rng, 2, 2, uniform_rows=False)
            _, moments = skf_slds_moments(model, DET, 5)
            for m in moments:
                implied = m.e_cov + np.outer(m.e_mean, m.e_mean)
                assert np.linalg.eigvalsh(implied).min() >= -1e-10
                assert np.linalg.eigvalsh(m.e_cov).min() >= -1e-10


class TestPruning:
    def test_full_mass_equals_exact(self, bench):
        exact, _ = skf_slds_moments(bench, DET, 6)
        full, _ = pruned_moments(bench, DET, 6, mass=1.0)
        assert full.method == "pruned"
        assert np.abs(full.mse - exact.mse).max() <= 1e-12
        assert np.abs(full.kept_mass - 1.0).max() <= 1e-12

    def test_keep_monotone_and_exact_at_full_width(self, bench):
        exact, _ = skf_slds_moments(bench, DET, 3)
        last_mass = None
        for keep in (1, 2, 4, 16, 64):
            got, _ = pruned_moments(bench, DET, 3, keep=keep)
            if last_mass is not None:
                assert np.all(got.kept_mass >= last_mass - 1e-12)
            last_mass = got.kept_mass
        # keep = 4^3 covers every pair trajectory: bitwise-level agreement
        assert np.abs(last_mass - 1.0).max() <= 1e-12
        full, _ = pruned_moments(bench, DET, 3, keep=64)
        assert np.abs(full.mse - exact.mse).max() <= 1e-12

    def test_mass_target_reached(self, bench):
        got, _ = pruned_moments(bench, DET, 5, mass=0.8)
        assert np.all(got.kept_mass >= 0.8 - 1e-12)
        assert got.kept_mass[5] < 0.999  # pruning actually happened

    def test_uniform_chain_starves_narrow_beam(self, bench):
        # With uniform switching every trajectory is equally likely, so a
        # width-4 beam holds a vanishing share of the mass and the
        # unnormalized sum collapses with it.
        exact, _ = skf_slds_moments(bench, DET, 6)
        unnorm, _ = pruned_moments(bench, DET, 6, keep=4)
        renorm, _ = pruned_moments(bench, DET, 6, keep=4, renormalize=True)
        assert_allclose(unnorm.kept_mass[6], 0.81 * 0.45 ** 4, atol=1e-12)
        assert unnorm.mse[6] < 0.1 * exact.mse[6]
        # renormalizing recovers a usable estimate from the same beam
        assert abs(renorm.mse[6] - exact.mse[6]) < 0.01 * exact.mse[6]
        assert_allclose(renorm.mse, unnorm.mse / unnorm.kept_mass, atol=1e-12)

    def test_sticky_chain_narrow_beam_stays_faithful(self):
        model = bimodal_model(prior=(1.0, 0.0),
                              rows=np.array([[0.99, 0.01], [0.01, 0.99]]))
        exact, _ = single_mode_slds_moments(model, model.modes[1], 6)
        got, _ = pruned_moments(model, None, 6, keep=4, filt=model.modes[1])
        assert_allclose(got.kept_mass[6], 0.9798079302, atol=1e-9)
        gap = np.abs(got.mse[1:] - exact.mse[1:]) / exact.mse[1:]
        assert gap.max() < 0.005

    def test_keep_and_mass_both_given_rejected(self, bench):
        with pytest.raises(ValueError):
            pruned_moments(bench, DET, 3, keep=2, mass=0.9)
        with pytest.raises(ValueError):
            pruned_moments(bench, DET, 3)

    def test_invalid_mass_rejected(self, bench):
        for bad in (0.0, -0.5, 1.5):
            with pytest.raises(ValueError):
                pruned_moments(bench, DET, 3, mass=bad)


class TestCaps:
    def test_upfront_cap_for_pairs(self, bench):
        with pytest.raises(EnumerationCapError, match="cap"):
            skf_slds_moments(bench, DET, 11)  # 4^11 > 2^20

    def test_upfront_cap_for_single(self, rng):
        model = random_model(rng, 3, 1)
        with pytest.raises(EnumerationCapError, match="cap"):
            single_mode_slds_moments(model, model.modes[0], 13)  # 3^13 > 2^20

    def test_upfront_cap_message_suggests_alternatives(self, bench):
        with pytest.raises(EnumerationCapError, match="aggregate"):
            skf_slds_moments(bench, DET, 3, cap=20)

    def test_per_step_cap_when_beam_outgrows_it(self, bench):
        # A pruned run skips the up-front power check, so a beam wider
        # than cap/branch-factor trips the per-step guard instead.
        with pytest.raises(EnumerationCapError, match="step 3"):
            pruned_moments(bench, DET, 3, keep=8, cap=20)

    def test_pruning_relieves_the_cap(self, bench):
        series, _ = pruned_moments(bench, DET, 6, keep=2, cap=20)
        assert len(series) == 7


class TestGainVariants:
    def test_variants_coincide_on_locked_chain(self):
        model = bimodal_model(z=2, prior=(1.0, 0.0), rows=np.eye(2))
        det = DetectionModel(1.0)
        sched, _ = skf_slds_moments(model, det, 6, gains="schedule")
        path, _ = skf_slds_moments(model, det, 6, gains="detected-path")
        assert np.abs(sched.mse - path.mse).max() <= 1e-12

    def test_variants_close_on_benchmark(self, bench):
        sched, _ = skf_slds_moments(bench, DET, 6, gains="schedule")
        path, _ = skf_slds_moments(bench, DET, 6, gains="detected-path")
        rel = np.abs(path.mse[1:] - sched.mse[1:]) / sched.mse[1:]
        assert 0.0 < rel.max() < 0.01

    def test_unknown_variant_rejected(self, bench):
        with pytest.raises(ValueError):
            skf_slds_moments(bench, DET, 3, gains="nonsense")


class TestTypes:
    def test_trajectory_holds_modes_and_prob(self):
        t = Trajectory(modes=(1, 2, 2), prob=0.08)
        assert t.modes == (1, 2, 2)
        assert t.prob == 0.08

    def test_trajectory_pair_defaults(self):
        pair = TrajectoryPair(truth=(1, 2), detected=(1, 1), prob=0.05)
        assert pair.moments is None
