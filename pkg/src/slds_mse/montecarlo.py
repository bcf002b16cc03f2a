"""Monte Carlo ground truth for the analytic MSE predictions.

Simulates the switching system, runs each candidate filter on the
simulated measurements and accumulates empirical error moments.  Every
analytic series in this package is cross-checked against this module.

Reproducibility contract: samples are processed in fixed chunks of
``CHUNK``; chunk ``c`` draws from a Philox counter-based generator keyed
by ``(seed, c)``, with the counter's last word distinguishing purposes
(0 for the system simulation, 1 + filter index for a switching filter's
detection draws).  Partial results are reduced in chunk order, so the
output is bitwise identical for a given seed regardless of how many
threads computed the chunks, and the switching filter's detection noise
never perturbs the simulated trajectories.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .model import DetectionModel, FilterSpec, SldsModel
from .kalman import average_filter_modes, gain_schedule, mode_schedules

CHUNK = 1024

_PURPOSE_SIM = 0


def _rng(seed: int, chunk: int, purpose: int = _PURPOSE_SIM) -> np.random.Generator:
    """The pinned per-chunk generator; see the module docstring."""
    key = np.array([seed, chunk], dtype=np.uint64)
    counter = np.array([0, 0, 0, purpose], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(counter=counter, key=key))


def _noise_transform(cov: np.ndarray) -> np.ndarray:
    """L with L @ L.T = cov; falls back to an eigendecomposition when the
    covariance is singular (legitimate for zero-noise test models)."""
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(cov)
        return v @ np.diag(np.sqrt(np.clip(w, 0.0, None)))


def _simulate_batch(model: SldsModel, n_steps: int, rng: np.random.Generator,
                    count: int):
    """Vectorized simulation of ``count`` independent runs.

    Draw order (fixed, part of the determinism contract): initial-state
    noise, then per step the mode uniform, the process noise and the
    measurement noise.
    """
    z, m = model.z, model.m
    H = model.meas.H
    L0 = _noise_transform(model.init.cov)
    Lr = _noise_transform(model.meas.R)
    Lq = [_noise_transform(mode.Q) for mode in model.modes]

    states = np.empty((count, n_steps + 1, z))
    meas = np.empty((count, n_steps, m))
    states[:, 0] = model.init.mean + rng.standard_normal((count, z)) @ L0.T

    chain = model.chain
    cum_prior = np.cumsum(chain.prior)
    cum_rows = np.cumsum(chain.Z, axis=1)
    modes = np.empty((count, n_steps), dtype=np.intp)
    for n in range(1, n_steps + 1):
        u = rng.random(count)
        if n == 1:
            idx = np.sum(cum_prior[None, :] <= u[:, None], axis=1)
        else:
            idx = np.sum(cum_rows[modes[:, n - 2]] <= u[:, None], axis=1)
        modes[:, n - 1] = np.minimum(idx, model.r - 1)

        noise = rng.standard_normal((count, z))
        x = np.empty((count, z))
        for i, mode in enumerate(model.modes):
            mask = modes[:, n - 1] == i
            if np.any(mask):
                x[mask] = (states[mask, n - 1] @ mode.A.T
                           + noise[mask] @ Lq[i].T)
        states[:, n] = x
        meas[:, n - 1] = x @ H.T + rng.standard_normal((count, m)) @ Lr.T
    return modes, states, meas


def simulate_slds(model: SldsModel, n_steps: int, rng: np.random.Generator):
    """One simulated run: (mode indices 0-based for steps 1..N, states for
    steps 0..N, measurements for steps 1..N)."""
    modes, states, meas = _simulate_batch(model, n_steps, rng, 1)
    return modes[0], states[0], meas[0]


def draw_detections(true_modes: np.ndarray, det: DetectionModel, r: int,
                    rng: np.random.Generator) -> np.ndarray:
    """Detected modes for the switching filter: the true mode with
    probability p_d, else uniform over the wrong ones.  Per step: one
    uniform draw, then (if r > 1) one integer draw for the wrong mode."""
    true_modes = np.atleast_2d(true_modes)
    if r < 2:
        return true_modes.copy()
    count, n_steps = true_modes.shape
    detected = np.empty_like(true_modes)
    for n in range(n_steps):
        truth = true_modes[:, n]
        hit = rng.random(count) < det.p_d
        wrong = rng.integers(0, r - 1, size=count)
        wrong = wrong + (wrong >= truth)      # skip over the true index
        detected[:, n] = np.where(hit, truth, wrong)
    return detected


def _single_filter_errors(states, meas, filt_modes, gains, H, init_mean):
    count, n_plus_1, z = states.shape
    errors = np.empty_like(states)
    xhat = np.tile(init_mean, (count, 1))
    errors[:, 0] = states[:, 0] - xhat
    for n in range(1, n_plus_1):
        pred = xhat @ filt_modes[n - 1].A.T
        xhat = pred + (meas[:, n - 1] - pred @ H.T) @ gains[n - 1].T
        errors[:, n] = states[:, n] - xhat
    return errors


def _skf_errors(states, meas, detected, model, schedules, H):
    count, n_plus_1, z = states.shape
    errors = np.empty_like(states)
    xhat = np.tile(model.init.mean, (count, 1))
    errors[:, 0] = states[:, 0] - xhat
    for n in range(1, n_plus_1):
        new = np.empty((count, z))
        for j, mode in enumerate(model.modes):
            mask = detected[:, n - 1] == j
            if not np.any(mask):
                continue
            pred = xhat[mask] @ mode.A.T
            K = schedules[j].gains[n - 1]
            new[mask] = pred + (meas[mask, n - 1] - pred @ H.T) @ K.T
        xhat = new
        errors[:, n] = states[:, n] - xhat
    return errors


def run_filter_on_sim(sim, model: SldsModel, spec: FilterSpec,
                      det: Optional[DetectionModel] = None,
                      rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Error sequence e_0..e_N of one filter on one simulated run.

    ``sim`` is the (modes, states, measurements) triple from
    :func:`simulate_slds`.  The switching filter additionally needs the
    detection model and a generator for the detection draws.
    """
    modes, states, meas = sim
    n_steps = meas.shape[0]
    H = model.meas.H
    if spec.kind == "skf":
        if det is None or rng is None:
            raise ValueError("switching filter needs a detection model and rng")
        detected = draw_detections(modes[None, :], det, model.r, rng)
        schedules = mode_schedules(model, n_steps)
        return _skf_errors(states[None], meas[None], detected,
                           model, schedules, H)[0]
    if spec.kind == "average":
        filt = average_filter_modes(model, n_steps)
    else:
        filt = [model.modes[spec.mode - 1]] * n_steps
    schedule = gain_schedule(filt, model.meas, model.init, n_steps)
    return _single_filter_errors(states[None], meas[None], filt,
                                 schedule.gains, H, model.init.mean)[0]


@dataclass(frozen=True)
class SimRun:
    """Error-moment accumulators of one filter over a sample set.

    Raw sums over samples, per step 0..N: the error vector, its outer
    product, the squared norm, the squared norm's square, and the error
    scaled by its squared norm (for variance-of-variance estimates).
    Merging two runs is plain addition, so chunked reductions are exact.
    """

    samples: int
    sum_e: np.ndarray
    sum_ee: np.ndarray
    sum_sq: np.ndarray
    sum_quad: np.ndarray
    sum_cube: np.ndarray

    @classmethod
    def from_errors(cls, errors: np.ndarray) -> "SimRun":
        sq = np.einsum("sni,sni->sn", errors, errors)
        return cls(
            samples=errors.shape[0],
            sum_e=errors.sum(axis=0),
            sum_ee=np.einsum("sni,snj->nij", errors, errors),
            sum_sq=sq.sum(axis=0),
            sum_quad=(sq * sq).sum(axis=0),
            sum_cube=np.einsum("sn,sni->ni", sq, errors),
        )

    def __add__(self, other: "SimRun") -> "SimRun":
        return SimRun(
            samples=self.samples + other.samples,
            sum_e=self.sum_e + other.sum_e,
            sum_ee=self.sum_ee + other.sum_ee,
            sum_sq=self.sum_sq + other.sum_sq,
            sum_quad=self.sum_quad + other.sum_quad,
            sum_cube=self.sum_cube + other.sum_cube,
        )

    def mean(self) -> np.ndarray:
        return self.sum_e / self.samples

    def cov(self) -> np.ndarray:
        """Sample covariance (ddof=1) of the error at each step."""
        s = self.samples
        mean = self.mean()
        outer = mean[:, :, None] * mean[:, None, :]
        return (self.sum_ee - s * outer) / (s - 1)

    def mean_stderr(self) -> np.ndarray:
        """Componentwise standard error of the mean error."""
        var = np.einsum("nii->ni", self.cov())
        return np.sqrt(np.clip(var, 0.0, None) / self.samples)

    def mse(self) -> np.ndarray:
        return self.sum_sq / self.samples

    def mse_stderr(self) -> np.ndarray:
        """Standard error of the empirical MSE (sample std of the squared
        norm over sqrt(samples)); NaN with fewer than two samples."""
        s = self.samples
        if s < 2:
            return np.full_like(self.sum_sq, np.nan)
        mean_sq = self.mse()
        var = (self.sum_quad / s - mean_sq ** 2) * s / (s - 1)
        return np.sqrt(np.clip(var, 0.0, None) / s)

    def var(self) -> np.ndarray:
        """Scalar error variance per step; defined for z = 1 only."""
        if self.sum_e.shape[1] != 1:
            raise ValueError("variance summary is for scalar states only")
        return self.cov()[:, 0, 0]

    def var_stderr(self) -> np.ndarray:
        """Standard error of the sample variance, from the fourth central
        moment; defined for z = 1 only."""
        s = self.samples
        mean = self.mean()[:, 0]
        m2 = self.sum_sq / s - mean ** 2
        m4 = (self.sum_quad
              - 4.0 * mean * self.sum_cube[:, 0]
              + 6.0 * mean ** 2 * self.sum_sq) / s - 3.0 * mean ** 4
        var_of_var = (m4 - (s - 3) / (s - 1) * m2 ** 2) / s
        return np.sqrt(np.clip(var_of_var, 0.0, None))


@dataclass(frozen=True)
class EmpiricalMse:
    """Per-step empirical MSE and its standard error."""

    mse: np.ndarray
    stderr: np.ndarray


def empirical_mse(run: SimRun) -> EmpiricalMse:
    """Mean squared error norm per step with a delta-method standard
    error; stderr is NaN when the run holds a single sample."""
    return EmpiricalMse(mse=run.mse(), stderr=run.mse_stderr())


def _chunk_sizes(samples: int) -> list[int]:
    full, rest = divmod(samples, CHUNK)
    return [CHUNK] * full + ([rest] if rest else [])


def run_monte_carlo(model: SldsModel, filters: Sequence[FilterSpec],
                    det: Optional[DetectionModel], n_steps: int,
                    samples: int, seed: int, threads: int = 1,
                    ) -> list[SimRun]:
    """Empirical error accumulators for each filter, one SimRun per spec.

    ``threads`` only distributes chunks; the result is bitwise identical
    for any thread count (see the module docstring).
    """
    if samples < 1:
        raise ValueError(f"need at least one sample, got {samples}")
    filters = list(filters)
    if det is None and any(f.kind == "skf" for f in filters):
        raise ValueError("switching filter requires a detection model")

    H = model.meas.H
    prepared = []
    skf_schedules = None
    for spec in filters:
        if spec.kind == "skf":
            if skf_schedules is None:
                skf_schedules = mode_schedules(model, n_steps)
            prepared.append(None)
        else:
            if spec.kind == "average":
                filt = average_filter_modes(model, n_steps)
            else:
                filt = [model.modes[spec.mode - 1]] * n_steps
            schedule = gain_schedule(filt, model.meas, model.init, n_steps)
            prepared.append((filt, schedule.gains))

    def work(chunk: int, count: int) -> list[SimRun]:
        sim_rng = _rng(seed, chunk, _PURPOSE_SIM)
        modes, states, meas = _simulate_batch(model, n_steps, sim_rng, count)
        out = []
        for f_idx, spec in enumerate(filters):
            if spec.kind == "skf":
                det_rng = _rng(seed, chunk, 1 + f_idx)
                detected = draw_detections(modes, det, model.r, det_rng)
                errors = _skf_errors(states, meas, detected, model,
                                     skf_schedules, H)
            else:
                filt, gains = prepared[f_idx]
                errors = _single_filter_errors(states, meas, filt, gains,
                                               H, model.init.mean)
            out.append(SimRun.from_errors(errors))
        return out

    sizes = _chunk_sizes(samples)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, range(len(sizes)), sizes))
    else:
        parts = [work(c, s) for c, s in enumerate(sizes)]

    totals = parts[0]
    for part in parts[1:]:
        totals = [a + b for a, b in zip(totals, part)]
    return totals
