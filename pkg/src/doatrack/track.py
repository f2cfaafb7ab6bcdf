"""Sequential Bayesian smoothing of per-frame DoA estimates.

State is azimuth plus azimuth rate under a constant-velocity model with
white-acceleration process noise. Three filters are provided: a linear
Kalman filter with wrapped innovations, a wrapped Kalman filter that keeps a
Gaussian mixture over wrapping hypotheses, and a bootstrap particle filter.
`track_lifecycle` adds initiation, gating, and termination on top.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .assignment import gated_assignment
from .geometry import wrap_angle

logger = logging.getLogger(__name__)

TENTATIVE = "tentative"
CONFIRMED = "confirmed"
TERMINATED = "terminated"


class FilterDivergenceError(ArithmeticError):
    """Covariance lost positive definiteness; the track should be flagged."""


@dataclass(frozen=True)
class TrackState:
    mean: np.ndarray  # [azimuth (rad), azimuth rate (rad/s)]
    covariance: np.ndarray
    track_id: int = 0
    last_update: float = 0.0
    status: str = TENTATIVE

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(-1).copy()
        cov = np.asarray(self.covariance, dtype=float).copy()
        mean[0] = wrap_angle(mean[0])
        cov = 0.5 * (cov + cov.T)
        try:
            np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise FilterDivergenceError("covariance is not positive-definite") from None
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)

    @property
    def azimuth(self) -> float:
        return float(self.mean[0])


def _transition(dt: float):
    return np.array([[1.0, dt], [0.0, 1.0]])


def process_noise_cov(dt: float, intensity: float) -> np.ndarray:
    """White-acceleration process noise for a constant-velocity model."""
    return intensity * np.array([
        [dt**3 / 3.0, dt**2 / 2.0],
        [dt**2 / 2.0, dt],
    ])


def kf_predict(state: TrackState, dt: float, process_noise: float) -> TrackState:
    if dt < 0:
        raise ValueError("dt must be non-negative")
    if dt == 0:
        return state
    f = _transition(dt)
    mean = f @ state.mean
    cov = f @ state.covariance @ f.T + process_noise_cov(dt, process_noise)
    return replace(state, mean=mean, covariance=cov,
                   last_update=state.last_update + dt)


_H = np.array([[1.0, 0.0]])


def kf_update(state: TrackState, obs: float, obs_noise_var: float) -> TrackState:
    """Kalman measurement update with the innovation wrapped into [-pi, pi)."""
    if not np.isfinite(obs):
        raise ValueError("observation must be finite")
    if obs_noise_var <= 0:
        raise ValueError("obs_noise_var must be positive")
    innovation = wrap_angle(obs - state.mean[0])
    s = float(state.covariance[0, 0] + obs_noise_var)
    gain = state.covariance @ _H.T / s
    mean = state.mean + gain.flatten() * innovation
    ikh = np.eye(2) - gain @ _H
    # Joseph form keeps the covariance symmetric positive-definite
    cov = ikh @ state.covariance @ ikh.T + gain @ gain.T * obs_noise_var
    return replace(state, mean=mean, covariance=cov)


def innovation_variance(state: TrackState, obs_noise_var: float) -> float:
    return float(state.covariance[0, 0] + obs_noise_var)


# ---------------------------------------------------------------------------
# Wrapped Kalman filter
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WrappedMixture:
    """Gaussian mixture over the azimuth state, one component per wrap hypothesis."""

    components: tuple  # of (weight, mean, covariance)
    cap: int = 8

    def __post_init__(self):
        comps = []
        total = 0.0
        for w, mean, cov in self.components:
            mean = np.asarray(mean, dtype=float).reshape(-1).copy()
            cov = np.asarray(cov, dtype=float)
            np.linalg.cholesky(cov)  # PD check
            comps.append((float(w), mean, cov))
            total += w
        if not comps:
            raise ValueError("mixture needs at least one component")
        if abs(total - 1.0) > 1e-9:
            raise ValueError("mixture weights must sum to 1")
        object.__setattr__(self, "components", tuple(comps))

    @classmethod
    def from_state(cls, state: TrackState, cap: int = 8) -> "WrappedMixture":
        return cls(((1.0, state.mean, state.covariance),), cap)

    def circular_mean(self) -> float:
        z = sum(w * np.exp(1j * mean[0]) for w, mean, _ in self.components)
        return float(np.angle(z))

    def mean_state(self) -> np.ndarray:
        """Moment-matched state mean with the azimuth taken circularly."""
        az = self.circular_mean()
        rate = sum(w * mean[1] for w, mean, _ in self.components)
        return np.array([az, rate])


def wrapped_kf_predict(mix: WrappedMixture, dt: float, process_noise: float) -> WrappedMixture:
    if dt < 0:
        raise ValueError("dt must be non-negative")
    if dt == 0:
        return mix
    f = _transition(dt)
    q = process_noise_cov(dt, process_noise)
    comps = tuple(
        (w, f @ mean, f @ cov @ f.T + q) for w, mean, cov in mix.components
    )
    return WrappedMixture(comps, mix.cap)


def _merge_components(comps, cap, merge_dist=0.5):
    """Greedy weight-ordered merge of nearby components, then hard cap."""
    comps = sorted(comps, key=lambda c: -c[0])
    merged = []
    for w, mean, cov in comps:
        absorbed = False
        for i, (wi, mi, ci) in enumerate(merged):
            diff = mean - mi
            diff[0] = wrap_angle(diff[0])
            maha = float(diff @ np.linalg.solve(ci, diff))
            if maha < merge_dist:
                wt = wi + w
                new_mean = mi + (w / wt) * diff
                new_mean[0] = wrap_angle(new_mean[0])
                spread = np.outer(diff, diff)
                new_cov = (wi * ci + w * cov + (wi * w / wt) * spread) / wt
                merged[i] = (wt, new_mean, new_cov)
                absorbed = True
                break
        if not absorbed:
            merged.append((w, mean.copy(), cov.copy()))
    merged = sorted(merged, key=lambda c: -c[0])[:cap]
    total = sum(w for w, _, _ in merged)
    return tuple((w / total, m, c) for w, m, c in merged)


def wrapped_kf_update(mix: WrappedMixture, obs: float, obs_noise_var: float,
                      prune_weight: float = 1e-4) -> WrappedMixture:
    """Update each component against the wrapping hypotheses obs + {-2pi, 0, 2pi}.

    Hypothesis weights are the prior weights times the innovation likelihood;
    the posterior mixture is pruned and merged back to the component cap.
    """
    obs = wrap_angle(obs)
    hypotheses = (obs - 2 * np.pi, obs, obs + 2 * np.pi)
    candidates = []
    for w, mean, cov in mix.components:
        s = float(cov[0, 0] + obs_noise_var)
        gain = (cov @ _H.T / s).flatten()
        ikh = np.eye(2) - np.outer(gain, _H.flatten())
        post_cov = ikh @ cov @ ikh.T + np.outer(gain, gain) * obs_noise_var
        post_cov = 0.5 * (post_cov + post_cov.T)
        for hyp in hypotheses:
            innovation = hyp - mean[0]
            likelihood = np.exp(-0.5 * innovation**2 / s) / np.sqrt(2 * np.pi * s)
            weight = w * likelihood
            if weight <= 0.0:
                continue
            post_mean = mean + gain * innovation
            post_mean = post_mean.copy()
            post_mean[0] = wrap_angle(post_mean[0])
            candidates.append((weight, post_mean, post_cov))
    total = sum(c[0] for c in candidates)
    if total <= 0.0:
        # observation is incompatible with every hypothesis: keep the prior
        logger.warning("wrapped KF update rejected observation %.3f (zero likelihood)", obs)
        return mix
    candidates = [(w / total, m, c) for w, m, c in candidates if w / total >= prune_weight]
    if not candidates:
        return mix
    comps = _merge_components(candidates, mix.cap)
    return WrappedMixture(comps, mix.cap)


# ---------------------------------------------------------------------------
# Particle filter
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ParticleSet:
    particles: np.ndarray  # (I, 2)
    weights: np.ndarray  # (I,)
    track_id: int = 0

    def __post_init__(self):
        particles = np.atleast_2d(np.asarray(self.particles, dtype=float)).copy()
        weights = np.asarray(self.weights, dtype=float).copy()
        if particles.shape[0] != weights.shape[0] or particles.shape[0] < 1:
            raise ValueError("particle/weight count mismatch")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-9:
            raise ValueError("weights must be nonnegative and sum to 1")
        particles[:, 0] = wrap_angle(particles[:, 0])
        object.__setattr__(self, "particles", particles)
        object.__setattr__(self, "weights", weights)

    @property
    def size(self) -> int:
        return self.particles.shape[0]

    def effective_sample_size(self) -> float:
        return float(1.0 / np.sum(self.weights**2))

    def circular_mean(self) -> float:
        z = np.sum(self.weights * np.exp(1j * self.particles[:, 0]))
        return float(np.angle(z))


@dataclass(frozen=True)
class PfParams:
    process_intensity: float = 0.5
    obs_noise_var: float = np.radians(3.0) ** 2
    resample_threshold: float = 0.5  # fraction of I


def wrapped_gaussian_likelihood(innovation, variance):
    """Likelihood of a wrapped innovation, summed over +/- one revolution."""
    innovation = np.asarray(innovation, dtype=float)
    total = np.zeros_like(innovation)
    for k in (-1, 0, 1):
        total = total + np.exp(-0.5 * (innovation + 2 * np.pi * k) ** 2 / variance)
    return total / np.sqrt(2 * np.pi * variance)


def systematic_resample(ps: ParticleSet, rng: np.random.Generator) -> ParticleSet:
    n = ps.size
    positions = (rng.random() + np.arange(n)) / n
    indices = np.searchsorted(np.cumsum(ps.weights), positions)
    indices = np.clip(indices, 0, n - 1)
    return ParticleSet(ps.particles[indices], np.full(n, 1.0 / n), ps.track_id)


def pf_step(ps: ParticleSet, obs: float, dt: float, params: PfParams,
            rng: np.random.Generator) -> ParticleSet:
    """One predict/weight/resample cycle with the prior as proposal."""
    particles = ps.particles.copy()
    if dt > 0:
        q = process_noise_cov(dt, params.process_intensity)
        particles = particles @ _transition(dt).T
        if params.process_intensity > 0:
            particles += rng.multivariate_normal(np.zeros(2), q, size=ps.size)
    elif dt < 0:
        raise ValueError("dt must be non-negative")
    particles[:, 0] = wrap_angle(particles[:, 0])
    innovation = wrap_angle(obs - particles[:, 0])
    weights = ps.weights * wrapped_gaussian_likelihood(innovation, params.obs_noise_var)
    total = weights.sum()
    if total <= 0.0 or not np.isfinite(total):
        logger.warning("particle filter divergence: observation %.3f killed all weights", obs)
        weights = np.full(ps.size, 1.0 / ps.size)
    else:
        weights = weights / total
    out = ParticleSet(particles, weights, ps.track_id)
    if out.effective_sample_size() < params.resample_threshold * out.size:
        out = systematic_resample(out, rng)
    return out


# ---------------------------------------------------------------------------
# Track lifecycle
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrackerConfig:
    init_hits: int = 3          # M of the M-of-N initiation rule
    init_window: int = 5        # N of the M-of-N initiation rule
    gate_sigma: float = 3.0
    gate_max: float = np.radians(30.0)  # never gate wider than the evaluation gate
    t_miss: float = 0.5         # seconds without an update before termination
    obs_noise_std: float = np.radians(3.0)
    process_intensity: float = 0.5
    initial_rate_var: float = 1.0  # (rad/s)^2 prior on the azimuth rate


@dataclass
class _Candidate:
    state: TrackState
    history: list = field(default_factory=list)  # recent hit/miss booleans
    last_hit_time: float = 0.0
    confirmed_id: int = 0
    emitted: list = field(default_factory=list)


def track_lifecycle(estimates, config: TrackerConfig = TrackerConfig()):
    """Initiate, gate, update, and terminate azimuth tracks over an estimate stream.

    Estimates must be time-ordered. Returns {track_id: [TrackState, ...]}
    with one state per processed timestamp from confirmation to termination;
    ids are assigned in confirmation order and never reused.
    """
    by_time: dict = {}
    for est in estimates:
        by_time.setdefault(round(est.timestamp, 9), []).append(est)
    timestamps = sorted(by_time)
    if timestamps and np.any(np.diff(timestamps) < 0):
        raise ValueError("estimates must be time-ordered")

    obs_var = config.obs_noise_std**2
    candidates: list[_Candidate] = []
    results: dict[int, list[TrackState]] = {}
    next_id = 1
    prev_t = None

    for t in timestamps:
        observations = [e.doa.azimuth for e in by_time[t]]
        dt = 0.0 if prev_t is None else t - prev_t
        prev_t = t

        for cand in candidates:
            cand.state = kf_predict(cand.state, dt, config.process_intensity)

        # gated assignment on wrapped innovation cost
        if candidates and observations:
            cost = np.zeros((len(candidates), len(observations)))
            admissible = np.zeros_like(cost, dtype=bool)
            for i, cand in enumerate(candidates):
                gate = min(
                    config.gate_sigma * np.sqrt(innovation_variance(cand.state, obs_var)),
                    config.gate_max,
                )
                for j, obs in enumerate(observations):
                    err = abs(wrap_angle(obs - cand.state.azimuth))
                    cost[i, j] = err
                    admissible[i, j] = err <= gate
            blocked = np.where(admissible, cost, np.pi + 1.0)
            pairs = gated_assignment(blocked, np.pi)
        else:
            pairs = []

        matched_tracks = set()
        matched_obs = set()
        for i, j in pairs:
            cand = candidates[i]
            try:
                cand.state = kf_update(cand.state, observations[j], obs_var)
            except FilterDivergenceError:
                logger.warning("track %d flagged: non-PD covariance", cand.confirmed_id)
                continue
            cand.last_hit_time = t
            cand.history.append(True)
            matched_tracks.add(i)
            matched_obs.add(j)

        survivors = []
        for i, cand in enumerate(candidates):
            if i not in matched_tracks:
                cand.history.append(False)
            cand.history = cand.history[-config.init_window:]
            if cand.confirmed_id == 0:
                if sum(cand.history) >= config.init_hits:
                    cand.confirmed_id = next_id
                    next_id += 1
                    results[cand.confirmed_id] = cand.emitted
                elif (len(cand.history) >= config.init_window
                        and sum(cand.history) + config.init_window - len(cand.history)
                        < config.init_hits):
                    continue  # cannot reach M of N any more
                elif t - cand.last_hit_time > config.t_miss:
                    continue
            if cand.confirmed_id and t - cand.last_hit_time > config.t_miss:
                continue  # terminated
            if cand.confirmed_id:
                cand.emitted.append(
                    replace(cand.state, track_id=cand.confirmed_id, last_update=t,
                            status=CONFIRMED)
                )
            survivors.append(cand)
        candidates = survivors

        for j, obs in enumerate(observations):
            if j in matched_obs:
                continue
            state = TrackState(
                mean=np.array([obs, 0.0]),
                covariance=np.diag([obs_var, config.initial_rate_var]),
                last_update=t,
            )
            candidates.append(_Candidate(state=state, history=[True], last_hit_time=t))

    return {tid: states for tid, states in results.items() if states}
