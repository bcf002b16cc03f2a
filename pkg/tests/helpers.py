"""Shared model builders for the test suite."""

from __future__ import annotations

import numpy as np

from slds_mse import (
    DetectionModel,
    GaussianBelief,
    MarkovChain,
    MeasurementModel,
    ModeModel,
    SldsModel,
)

# The two-mode benchmark used throughout: scaled-identity dynamics
# (a fast mode 0.9 and a slow mode 0.46), identity measurements, equal
# process/measurement noise, uniform switching.
BENCH_A = (0.9, 0.46)
BENCH_Q = 0.01
BENCH_R = 0.01


def bimodal_model(z: int = 4, a_values=BENCH_A, q: float = BENCH_Q,
                  r_noise: float = BENCH_R, prior=(0.5, 0.5),
                  rows=None) -> SldsModel:
    """Two-mode model with scaled-identity dynamics and identity H."""
    eye = np.eye(z)
    modes = tuple(ModeModel(a * eye, q * eye) for a in a_values)
    meas = MeasurementModel(eye, r_noise * eye)
    if rows is None:
        rows = np.full((len(modes),) * 2, 1.0 / len(modes))
    chain = MarkovChain(np.asarray(rows, dtype=float),
                        np.asarray(prior, dtype=float))
    init = GaussianBelief(np.ones(z), eye)
    return SldsModel(modes, meas, chain, init)


def single_mode_model(a: float = 0.9, q: float = BENCH_Q,
                      r_noise: float = BENCH_R, z: int = 1) -> SldsModel:
    """Degenerate one-mode model (plain linear-Gaussian system)."""
    eye = np.eye(z)
    modes = (ModeModel(a * eye, q * eye),)
    meas = MeasurementModel(eye, r_noise * eye)
    chain = MarkovChain(np.ones((1, 1)), np.ones(1))
    init = GaussianBelief(np.ones(z), eye)
    return SldsModel(modes, meas, chain, init)


def stable_matrix(rng: np.random.Generator, z: int,
                  radius: float = 0.9) -> np.ndarray:
    """Random matrix rescaled so its spectral radius is below ``radius``."""
    a = rng.standard_normal((z, z))
    rho = np.abs(np.linalg.eigvals(a)).max()
    return a * (radius * rng.uniform(0.5, 1.0) / max(rho, 1e-12))


def spd_matrix(rng: np.random.Generator, z: int,
               scale: float = 0.1) -> np.ndarray:
    """Random symmetric positive-definite matrix."""
    m = rng.standard_normal((z, z))
    return scale * (m @ m.T + 0.1 * np.eye(z))


def random_mode(rng: np.random.Generator, z: int,
                radius: float = 0.9) -> ModeModel:
    return ModeModel(stable_matrix(rng, z, radius), spd_matrix(rng, z))


def random_chain(rng: np.random.Generator, r: int,
                 uniform_rows: bool = True,
                 uniform_prior: bool = True) -> MarkovChain:
    if uniform_rows:
        rows = np.full((r, r), 1.0 / r)
    else:
        rows = rng.uniform(0.1, 1.0, size=(r, r))
        rows /= rows.sum(axis=1, keepdims=True)
    if uniform_prior:
        prior = np.full(r, 1.0 / r)
    else:
        prior = rng.uniform(0.1, 1.0, size=r)
        prior /= prior.sum()
    return MarkovChain(rows, prior)


def random_model(rng: np.random.Generator, r: int, z: int,
                 uniform_rows: bool = True,
                 uniform_prior: bool = True,
                 radius: float = 0.9) -> SldsModel:
    """Random stable switching model with identity-ish square measurements."""
    modes = tuple(random_mode(rng, z, radius) for _ in range(r))
    meas = MeasurementModel(np.eye(z) + 0.1 * rng.standard_normal((z, z)),
                            spd_matrix(rng, z, 0.05))
    chain = random_chain(rng, r, uniform_rows, uniform_prior)
    init = GaussianBelief(rng.standard_normal(z), spd_matrix(rng, z, 0.5))
    return SldsModel(modes, meas, chain, init)


def detection(p_d: float = 0.9) -> DetectionModel:
    return DetectionModel(p_d)
