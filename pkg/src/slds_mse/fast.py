"""Scalable SLDS error analysis: aggregate moments and mode merging.

Trajectory enumeration is exact but exponential in the horizon.  When
every transition row of the mode chain is uniform, the active mode at a
step is independent of the accumulated state/error statistics, so the
mixture moments close on themselves: knowing the mean and second moments
of (x, e) at step n-1 plus the noise statistics is enough to advance one
step.  The cost drops to O(N r^2 z^3) with no trajectory explosion.

The same machinery powers a pre-experiment mode-merge recommender: every
unordered mode pair is analyzed as a bimodal sub-system with a uniform
pairwise chain, and a pair whose switching filter barely improves on the
best single-filter alternative is recommended for merging into one
averaged mode.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .model import (
    DetectionModel,
    GaussianBelief,
    MarkovChain,
    ModeModel,
    MseSeries,
    SldsModel,
    mode_marginal_series,
    mode_marginals,
)
from .kalman import (
    ModeLike,
    as_mode_sequence,
    gain_schedule,
    mode_schedules,
)

METRICS = ("mean", "max", "final")


@dataclass(frozen=True)
class AggregateState:
    """Mixture moments over all trajectories at one step.

    ``xx``, ``ee`` and ``xe`` are raw second moments (E[x x.T], E[e e.T],
    E[x e.T]), not central ones; subtracting the outer products of the
    means recovers the covariances.
    """

    x_mean: np.ndarray
    e_mean: np.ndarray
    xx: np.ndarray
    ee: np.ndarray
    xe: np.ndarray
    step: int

    @property
    def mse(self) -> float:
        """E[e].E[e] + tr C(e), which is just tr E[e e.T]."""
        return float(np.trace(self.ee))


@dataclass(frozen=True)
class MergePairReport:
    """Merge analysis of one unordered mode pair (1-based indices)."""

    mode_i: int
    mode_j: int
    skf_mse: np.ndarray
    best_single_mse: np.ndarray
    best_single_label: str
    improvement: float
    metric: str
    threshold: float
    merge: bool


@dataclass(frozen=True)
class MergeReport:
    """All pairwise merge analyses for one model."""

    r: int
    threshold: float
    metric: str
    p_d: float
    pairs: tuple


def aggregate_init(init: GaussianBelief) -> AggregateState:
    """Step-0 moments: e_0 = x_0 - mean, so all second moments equal P_0
    up to the mean's outer product."""
    mean = init.mean
    return AggregateState(
        x_mean=mean.copy(),
        e_mean=np.zeros(init.z),
        xx=init.cov + np.outer(mean, mean),
        ee=init.cov.copy(),
        xe=init.cov.copy(),
        step=0,
    )


def _require_uniform(chain: MarkovChain) -> None:
    if not chain.is_uniform():
        raise ValueError(
            "aggregate recursion requires uniform transition rows; use "
            "trajectory enumeration or beam pruning for general chains")


def _joint_factors(A: np.ndarray, Q: np.ndarray, A_f: np.ndarray,
                   K: np.ndarray, H: np.ndarray, R: np.ndarray,
                   ) -> tuple[np.ndarray, np.ndarray]:
    """Per-branch transition G and noise covariance C of the joint
    vector [x; e].

    Within a branch x' = A x + v and e' = J x + M e + B v - K w with
    B = I - K H, M = B A_f, J = B (A - A_f), so the stacked vector obeys
    one linear map G = [[A, 0], [J, M]] plus zero-mean noise with
    covariance C = [[Q, Q B.T], [B Q, B Q B.T + K R K.T]].  The cross
    moment E[x e.T] must ride along or the error covariance is wrong,
    which is exactly what the enumeration oracle test pins down.  All
    inputs broadcast over leading batch axes.
    """
    z = A.shape[-1]
    B = np.eye(z) - K @ H
    M = B @ A_f
    J = B @ (A - A_f)
    lead = J.shape[:-2]
    G = np.zeros(lead + (2 * z, 2 * z))
    G[..., :z, :z] = A
    G[..., z:, :z] = J
    G[..., z:, z:] = M
    QBt = Q @ B.swapaxes(-1, -2)
    C = np.zeros(lead + (2 * z, 2 * z))
    C[..., :z, :z] = Q
    C[..., :z, z:] = QBt
    C[..., z:, :z] = QBt.swapaxes(-1, -2)
    C[..., z:, z:] = B @ QBt + (K @ R) @ K.swapaxes(-1, -2)
    return G, C


def _joint_step(mu: np.ndarray, phi: np.ndarray, w: np.ndarray,
                G: np.ndarray, Gw: np.ndarray, Cw: np.ndarray,
                ) -> tuple[np.ndarray, np.ndarray]:
    """Advance the joint mean and second moment by one mixture step.

    ``G`` stacks the branch maps (b, 2z, 2z); ``Gw`` and ``Cw`` are their
    weight-summed versions, precomputable because the weights never
    depend on the state.
    """
    gphi = G @ phi
    phi = np.einsum("b,bij,bkj->ik", w, gphi, G) + Cw
    return Gw @ mu, (phi + phi.T) / 2.0


def _to_state(mu: np.ndarray, phi: np.ndarray, step: int) -> AggregateState:
    z = mu.size // 2
    return AggregateState(x_mean=mu[:z], e_mean=mu[z:], xx=phi[:z, :z],
                          ee=phi[z:, z:], xe=phi[:z, z:], step=step)


def _from_state(state: AggregateState) -> tuple[np.ndarray, np.ndarray]:
    mu = np.concatenate((state.x_mean, state.e_mean))
    phi = np.block([[state.xx, state.xe], [state.xe.T, state.ee]])
    return mu, phi


def _detection_weights(r: int, det: DetectionModel,
                       ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Flattened (true mode i, detected mode j) branch layout with the
    detection factor of each branch; a lone mode is always detected,
    whatever p_d says."""
    i_idx, j_idx = np.divmod(np.arange(r * r), r)
    hit = det.p_d if r > 1 else 1.0
    d = np.where(i_idx == j_idx, hit, (1.0 - det.p_d) / max(r - 1, 1))
    return i_idx, j_idx, d


def aggregate_step(prev: AggregateState, model: SldsModel,
                   det: DetectionModel, gains: Sequence[np.ndarray],
                   ) -> AggregateState:
    """One switching-filter step: branch over (true mode i, detected mode
    j) with weight marginal(i) * [p_d if i = j else (1 - p_d)/(r - 1)].

    ``gains`` holds each mode's standalone schedule gain for this step.
    The step-1 marginal is the prior; afterwards a uniform chain pins
    every marginal to 1/r, which is what makes the mixture closable.
    """
    _require_uniform(model.chain)
    marg = mode_marginals(model.chain, prev.step + 1)
    i_idx, j_idx, d = _detection_weights(model.r, det)
    A = np.stack([model.modes[i].A for i in i_idx])
    Q = np.stack([model.modes[i].Q for i in i_idx])
    A_f = np.stack([model.modes[j].A for j in j_idx])
    K = np.stack([np.asarray(gains[j]) for j in j_idx])
    G, C = _joint_factors(A, Q, A_f, K, model.meas.H, model.meas.R)
    w = marg[i_idx] * d
    Gw = np.einsum("b,bij->ij", w, G)
    Cw = np.einsum("b,bij->ij", w, C)
    mu, phi = _joint_step(*_from_state(prev), w, G, Gw,
                          (Cw + Cw.T) / 2.0)
    return _to_state(mu, phi, prev.step + 1)


def aggregate_state_series(model: SldsModel, det: Optional[DetectionModel],
                           n_steps: int, filt: Optional[ModeLike] = None,
                           ) -> list[AggregateState]:
    """Aggregate moments for steps 0..n_steps.

    Default is the switching filter under ``det``; passing ``filt`` (a
    fixed mode or per-step sequence) analyzes that single filter on the
    switching system instead, with no detection involved.
    """
    _require_uniform(model.chain)
    r = model.r
    H, R = model.meas.H, model.meas.R
    init = aggregate_init(model.init)
    if n_steps <= 0:
        return [init]
    margs = mode_marginal_series(model.chain, n_steps)
    A = np.stack([mode.A for mode in model.modes])
    Q = np.stack([mode.Q for mode in model.modes])
    if filt is None:
        if det is None:
            raise ValueError("switching-filter analysis needs a detection model")
        schedules = mode_schedules(model, n_steps)
        i_idx, j_idx, d = _detection_weights(r, det)
        gains = np.stack([np.stack(s.gains) for s in schedules])  # (r,N,z,m)
        K_all = gains[j_idx].swapaxes(0, 1)                       # (N,b,z,m)
        G, C = _joint_factors(A[i_idx], Q[i_idx], A[j_idx], K_all, H, R)
        w_all = margs[:, i_idx] * d
    else:
        filt_modes = as_mode_sequence(filt, n_steps)
        schedule = gain_schedule(filt, model.meas, model.init, n_steps)
        K_all = np.stack(schedule.gains)[:, None]                 # (N,1,z,m)
        A_f = np.stack([mode.A for mode in filt_modes])[:, None]
        G, C = _joint_factors(A[None], Q[None], A_f, K_all, H, R)
        w_all = margs
    # the branch weights never depend on the state, so their sums against
    # G and C collapse into per-step constants before the recursion runs
    Gw = np.einsum("nb,nbij->nij", w_all, G)
    Cw = np.einsum("nb,nbij->nij", w_all, C)
    Cw = (Cw + Cw.swapaxes(-1, -2)) / 2.0
    mu, phi = _from_state(init)
    states = [init]
    for n in range(n_steps):
        mu, phi = _joint_step(mu, phi, w_all[n], G[n], Gw[n], Cw[n])
        states.append(_to_state(mu, phi, n + 1))
    return states


def aggregate_series(model: SldsModel, det: Optional[DetectionModel],
                     n_steps: int, filt: Optional[ModeLike] = None,
                     ) -> MseSeries:
    """MSE series via the aggregate recursion (uniform chains only)."""
    states = aggregate_state_series(model, det, n_steps, filt=filt)
    return MseSeries(mse=np.array([s.mse for s in states]),
                     method="aggregate")


def _metric_value(rel: np.ndarray, metric: str) -> float:
    if metric == "mean":
        return float(rel.mean())
    if metric == "max":
        return float(rel.max())
    return float(rel[-1])


def pair_model(model: SldsModel, i: int, j: int) -> SldsModel:
    """Bimodal sub-system for modes i, j (1-based) with a uniform pairwise
    chain, the marginal reduction used for merge analysis."""
    half = MarkovChain(Z=np.full((2, 2), 0.5), prior=np.array([0.5, 0.5]))
    return SldsModel(modes=(model.modes[i - 1], model.modes[j - 1]),
                     meas=model.meas, chain=half, init=model.init)


def merged_mode(model: SldsModel, members: Sequence[int]) -> ModeModel:
    """Replacement mode for a merged group: equal-weight average of the
    member (A, Q), matching the uniform pairwise chain the analysis used."""
    members = list(members)
    A = sum(model.modes[k - 1].A for k in members) / len(members)
    Q = sum(model.modes[k - 1].Q for k in members) / len(members)
    return ModeModel(A, Q)


def merge_recommendation(model: SldsModel, det: DetectionModel, n_steps: int,
                         threshold: float, metric: str = "mean",
                         ) -> MergeReport:
    """Analyze every unordered mode pair and recommend merges.

    For each pair the switching filter's MSE (aggregate recursion on the
    pairwise sub-system) is compared against the better of the pair's two
    single-mode KFs, "better" meaning the lower mean MSE over steps
    1..n_steps; the merge rule asks whether mode detection buys anything
    over committing to one mode's filter.  ``improvement`` summarizes the
    per-step relative MSE reduction by the chosen ``metric``; a pair
    merges when the improvement falls below ``threshold``.
    """
    if model.r < 2:
        raise ValueError("merge analysis needs at least two modes")
    if metric not in METRICS:
        raise ValueError(f"metric must be one of {METRICS}, got {metric!r}")
    pairs = []
    for i in range(1, model.r + 1):
        for j in range(i + 1, model.r + 1):
            sub = pair_model(model, i, j)
            skf = aggregate_series(sub, det, n_steps).mse
            candidates = [
                (f"kf-mode-{i}", aggregate_series(sub, None, n_steps,
                                                  filt=sub.modes[0]).mse),
                (f"kf-mode-{j}", aggregate_series(sub, None, n_steps,
                                                  filt=sub.modes[1]).mse),
            ]
            label, best = min(candidates, key=lambda c: c[1][1:].mean())
            denom = np.where(best[1:] > 0, best[1:], 1.0)
            rel = (best[1:] - skf[1:]) / denom
            improvement = _metric_value(rel, metric)
            pairs.append(MergePairReport(
                mode_i=i, mode_j=j, skf_mse=skf, best_single_mse=best,
                best_single_label=label, improvement=improvement,
                metric=metric, threshold=threshold,
                merge=improvement < threshold))
    return MergeReport(r=model.r, threshold=threshold, metric=metric,
                       p_d=det.p_d, pairs=tuple(pairs))


def merge_clusters(report: MergeReport) -> list[list[int]]:
    """Connected components of the merge graph (1-based mode indices).

    Modes joined by any chain of merge recommendations land in one
    cluster; a mode with no merges forms its own singleton.
    """
    parent = list(range(report.r + 1))

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for pair in report.pairs:
        if pair.merge:
            ra, rb = find(pair.mode_i), find(pair.mode_j)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
    groups: dict[int, list[int]] = {}
    for k in range(1, report.r + 1):
        groups.setdefault(find(k), []).append(k)
    return [groups[root] for root in sorted(groups)]
