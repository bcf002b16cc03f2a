"""Kalman filter operator and per-mode gain schedules.

Prediction and measurement update for a linear-Gaussian model::

    x_pred = A @ x
    P_pred = A @ P @ A.T + Q
    B      = H @ P_pred @ H.T + R          (innovation covariance)
    K      = P_pred @ H.T @ inv(B)         (computed via a PD solve)
    x_post = x_pred + K @ (y - H @ x_pred)
    P_post = (I - K @ H) @ P_pred

The covariance recursion never touches the data, so the whole gain
sequence K_1..K_N for a filter model can be computed up front; downstream
error analysis consumes only those schedules.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .model import (
    GaussianBelief,
    MeasurementModel,
    ModeModel,
    SldsModel,
    mode_marginals,
    symmetrize,
)

ModeLike = Union[ModeModel, Sequence[ModeModel]]


class InnovationSolveError(RuntimeError):
    """Raised when the innovation covariance cannot be factorized."""

    def __init__(self, message: str, condition: float):
        super().__init__(f"{message} (condition estimate {condition:.3e})")
        self.condition = condition


@dataclass(frozen=True)
class KalmanStepOutput:
    """Everything one predict/update cycle produces."""

    predicted: GaussianBelief
    posterior: GaussianBelief
    gain: np.ndarray
    innovation_cov: np.ndarray


@dataclass(frozen=True)
class GainSchedule:
    """Gains K_1..K_N and posterior covariances P_1..P_N of one filter."""

    gains: tuple
    covariances: tuple

    def __len__(self) -> int:
        return len(self.gains)


def kf_predict(belief: GaussianBelief, mode: ModeModel) -> GaussianBelief:
    """Time update: push a belief through one mode's dynamics."""
    if mode.z != belief.z:
        raise ValueError(f"mode dimension {mode.z} != belief dimension {belief.z}")
    mean = mode.A @ belief.mean
    cov = symmetrize(mode.A @ belief.cov @ mode.A.T + mode.Q)
    return GaussianBelief(mean, cov)


def kf_update(predicted: GaussianBelief, meas: MeasurementModel,
              y: np.ndarray, joseph: bool = False) -> KalmanStepOutput:
    """Measurement update.

    The gain is obtained from a Cholesky solve of the innovation
    covariance rather than an explicit inverse.  ``joseph=True`` switches
    the covariance update to the Joseph form, which is algebraically
    identical for the optimal gain but more tolerant of rounding.
    """
    H, R = meas.H, meas.R
    if meas.z != predicted.z:
        raise ValueError(f"measurement model expects state dimension "
                         f"{meas.z}, belief has {predicted.z}")
    y = np.asarray(y, dtype=float).reshape(H.shape[0])
    P = predicted.cov
    B = symmetrize(H @ P @ H.T + R)
    try:
        factor = cho_factor(B, lower=True, check_finite=False)
    except LinAlgError as exc:
        raise InnovationSolveError(
            "innovation covariance is not positive definite",
            float(np.linalg.cond(B))) from exc
    K = cho_solve(factor, H @ P, check_finite=False).T
    mean = predicted.mean + K @ (y - H @ predicted.mean)
    ikh = np.eye(P.shape[0]) - K @ H
    if joseph:
        cov = ikh @ P @ ikh.T + K @ R @ K.T
    else:
        cov = ikh @ P
    posterior = GaussianBelief(mean, symmetrize(cov))
    return KalmanStepOutput(predicted, posterior, K, B)


def as_mode_sequence(modes: ModeLike, n_steps: int) -> list[ModeModel]:
    """Normalize a fixed mode or per-step mode sequence to length n_steps."""
    if isinstance(modes, ModeModel):
        return [modes] * n_steps
    modes = list(modes)
    if len(modes) != n_steps:
        raise ValueError(f"expected {n_steps} per-step modes, got {len(modes)}")
    return modes


def gain_schedule(mode: ModeLike, meas: MeasurementModel,
                  init: GaussianBelief, n_steps: int,
                  joseph: bool = False) -> GainSchedule:
    """Run the covariance recursion for ``n_steps`` and collect the gains.

    ``mode`` may be a single :class:`ModeModel` or a per-step sequence
    (used for the average filter, whose dynamics follow the mode
    marginals).  Measurement values never enter the recursion.
    """
    steps = as_mode_sequence(mode, n_steps)
    H, R = meas.H, meas.R
    eye = np.eye(init.z)
    P = init.cov
    gains, covs = [], []
    # covariance-only replay of kf_predict/kf_update, skipping the belief
    # plumbing that a measurement-driven filter needs
    for step_mode in steps:
        P = symmetrize(step_mode.A @ P @ step_mode.A.T + step_mode.Q)
        B = symmetrize(H @ P @ H.T + R)
        try:
            factor = cho_factor(B, lower=True, check_finite=False)
        except LinAlgError as exc:
            raise InnovationSolveError(
                "innovation covariance is not positive definite",
                float(np.linalg.cond(B))) from exc
        K = cho_solve(factor, H @ P, check_finite=False).T
        ikh = eye - K @ H
        if joseph:
            P = symmetrize(ikh @ P @ ikh.T + K @ R @ K.T)
        else:
            P = symmetrize(ikh @ P)
        gains.append(K)
        covs.append(P)
    return GainSchedule(tuple(gains), tuple(covs))


def average_mode(model: SldsModel, n: int) -> ModeModel:
    """Marginal-probability-weighted mixture of the mode dynamics at step n.

    Both A and Q are averaged with the same weights, so the construction
    stays symmetric when process noise differs across modes.
    """
    w = mode_marginals(model.chain, n)
    A = sum(wi * mode.A for wi, mode in zip(w, model.modes))
    Q = sum(wi * mode.Q for wi, mode in zip(w, model.modes))
    return ModeModel(A, Q)


def average_filter_modes(model: SldsModel, n_steps: int) -> list[ModeModel]:
    """Per-step dynamics of the average filter for steps 1..n_steps."""
    return [average_mode(model, n) for n in range(1, n_steps + 1)]


def mode_schedules(model: SldsModel, n_steps: int) -> list[GainSchedule]:
    """Standalone gain schedule of each mode's own filter (shared P0).

    All modes share the measurement model and the initial covariance, so
    the r recursions run as one batched Riccati iteration.
    """
    H, R = model.meas.H, model.meas.R
    A = np.stack([mode.A for mode in model.modes])
    Q = np.stack([mode.Q for mode in model.modes])
    A_t, H_t = A.swapaxes(1, 2), H.T
    eye = np.eye(model.z)
    P = np.repeat(model.init.cov[None], model.r, axis=0)
    gains, covs = [], []
    for _ in range(n_steps):
        P = A @ P @ A_t + Q
        P = (P + P.swapaxes(1, 2)) / 2.0
        B = H @ P @ H_t + R
        B = (B + B.swapaxes(1, 2)) / 2.0
        try:
            np.linalg.cholesky(B)
        except LinAlgError as exc:
            raise InnovationSolveError(
                "innovation covariance is not positive definite",
                float(np.max(np.linalg.cond(B)))) from exc
        K = np.linalg.solve(B, H @ P).swapaxes(1, 2)
        P = (eye - K @ H) @ P
        P = (P + P.swapaxes(1, 2)) / 2.0
        gains.append(K)
        covs.append(P)
    return [GainSchedule(tuple(g[j] for g in gains), tuple(c[j] for c in covs))
            for j in range(model.r)]
