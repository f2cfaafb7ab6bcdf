import math

import numpy as np
import pytest

from doatrack.geometry import Doa, wrap_angle
from doatrack.localize import DoaEstimate
from doatrack.track import (ParticleSet, PfParams, TrackerConfig, TrackState,
                            WrappedMixture, innovation_variance, kf_predict,
                            kf_update, pf_step, process_noise_cov,
                            systematic_resample, track_lifecycle,
                            wrapped_gaussian_likelihood, wrapped_kf_predict,
                            wrapped_kf_update)


def _state(az=0.0, rate=0.0, var_az=0.01, var_rate=0.1):
    return TrackState(mean=np.array([az, rate]),
                      covariance=np.diag([var_az, var_rate]))


def test_process_noise_cov_formula():
    dt, q = 0.25, 0.8
    cov = process_noise_cov(dt, q)
    ref = q * np.array([[dt**3 / 3, dt**2 / 2], [dt**2 / 2, dt]])
    assert np.allclose(cov, ref)


def test_kf_predict_matches_manual():
    s = _state(0.3, 0.5, 0.02, 0.3)
    dt, q = 0.1, 0.4
    out = kf_predict(s, dt, q)
    f = np.array([[1, dt], [0, 1]])
    assert np.allclose(out.mean, f @ s.mean)
    assert np.allclose(out.covariance,
                       f @ s.covariance @ f.T + process_noise_cov(dt, q))


def test_kf_update_matches_manual():
    rng = np.random.default_rng(0)
    h = np.array([1.0, 0.0])
    for _ in range(100):
        a = rng.uniform(0.01, 1.0, 2)
        b = rng.uniform(-0.05, 0.05)
        p = np.array([[a[0], b], [b, a[1]]])
        if np.linalg.eigvalsh(p).min() <= 0:
            continue
        s = TrackState(mean=rng.uniform(-1, 1, 2), covariance=p)
        r = rng.uniform(0.001, 0.1)
        z = s.mean[0] + rng.normal(0, 0.1)
        out = kf_update(s, z, r)
        # classical KF equations as the oracle
        innov = z - h @ s.mean
        s_var = h @ p @ h + r
        k = p @ h / s_var
        mean_ref = s.mean + k * innov
        mean_ref[0] = wrap_angle(mean_ref[0])
        cov_ref = (np.eye(2) - np.outer(k, h)) @ p
        assert np.allclose(out.mean, mean_ref, atol=1e-12)
        assert np.allclose(out.covariance, cov_ref, atol=1e-10)
        assert np.allclose(out.covariance, out.covariance.T)


def test_kf_update_wrapped_innovation():
    # state near +pi, observation just across the wrap: innovation is small
    s = _state(az=math.pi - 0.05)
    out = kf_update(s, -math.pi + 0.05, 0.01)
    assert abs(wrap_angle(out.azimuth - math.pi)) < 0.2


def test_innovation_variance():
    s = _state(var_az=0.02)
    assert innovation_variance(s, 0.005) == pytest.approx(0.025)


def test_kf_converges_on_static_target():
    rng = np.random.default_rng(3)
    truth = 1.2
    s = _state(az=truth + 0.3, var_az=0.5, var_rate=0.5)
    for _ in range(100):
        s = kf_predict(s, 0.05, 0.01)
        s = kf_update(s, truth + rng.normal(0, 0.02), 0.02**2)
    assert abs(s.azimuth - truth) < 0.02
    assert s.covariance[0, 0] < 0.01


def test_wrapped_kf_matches_kf_away_from_wrap():
    rng = np.random.default_rng(4)
    s = _state(az=0.5, var_az=0.05, var_rate=0.2)
    mix = WrappedMixture.from_state(s)
    kf = s
    for _ in range(40):
        obs = 0.5 + rng.normal(0, 0.05)
        mix = wrapped_kf_predict(mix, 0.1, 0.1)
        kf = kf_predict(kf, 0.1, 0.1)
        mix = wrapped_kf_update(mix, obs, 0.05**2)
        kf = kf_update(kf, obs, 0.05**2)
        assert abs(wrap_angle(mix.circular_mean() - kf.azimuth)) < 1e-6


def test_wrapped_kf_tracks_through_wrap():
    rng = np.random.default_rng(5)
    rate = 1.0  # rad/s, crosses pi
    s = _state(az=math.pi - 0.3, rate=rate, var_az=0.01, var_rate=0.01)
    mix = WrappedMixture.from_state(s)
    t_axis = np.arange(1, 80) * 0.02
    prev = mix.circular_mean()
    for t in t_axis:
        truth = wrap_angle(math.pi - 0.3 + rate * t)
        mix = wrapped_kf_predict(mix, 0.02, 0.1)
        mix = wrapped_kf_update(mix, wrap_angle(truth + rng.normal(0, 0.03)), 0.03**2)
        cur = mix.circular_mean()
        assert abs(wrap_angle(cur - truth)) < 0.15
        assert abs(wrap_angle(cur - prev)) < 0.5  # no unwrap glitches
        prev = cur


def test_wrapped_mixture_component_cap():
    s = _state()
    mix = WrappedMixture.from_state(s)
    for _ in range(20):
        mix = wrapped_kf_predict(mix, 0.1, 0.5)
        mix = wrapped_kf_update(mix, 0.1, 0.01)
    assert len(mix.components) <= 8
    assert sum(w for w, _, _ in mix.components) == pytest.approx(1.0)


def test_wrapped_gaussian_likelihood_sums_images():
    innov, var = 0.4, 0.09
    ref = sum(
        math.exp(-(innov + 2 * math.pi * k) ** 2 / (2 * var))
        / math.sqrt(2 * math.pi * var)
        for k in (-1, 0, 1)
    )
    assert wrapped_gaussian_likelihood(innov, var) == pytest.approx(ref)


def test_systematic_resample_uniform_weights_and_mean():
    rng = np.random.default_rng(6)
    n = 5000
    particles = np.column_stack([rng.normal(1.0, 0.1, n), rng.normal(0, 0.1, n)])
    weights = rng.uniform(0, 1, n)
    weights /= weights.sum()
    ps = ParticleSet(particles, weights)
    out = systematic_resample(ps, rng)
    assert np.allclose(out.weights, 1.0 / n)
    before = np.sum(weights * particles[:, 0])
    after = out.particles[:, 0].mean()
    assert after == pytest.approx(before, abs=0.01)


def test_pf_tracks_kf_in_linear_regime():
    rng = np.random.default_rng(7)
    n = 4000
    obs_std = 0.05
    params = PfParams(process_intensity=0.05, obs_noise_var=obs_std**2)
    kf = _state(az=0.2, var_az=obs_std**2, var_rate=0.1)
    particles = np.column_stack([
        rng.normal(0.2, obs_std, n), rng.normal(0, math.sqrt(0.1), n)])
    ps = ParticleSet(particles, np.full(n, 1.0 / n))
    for _ in range(30):
        obs = 0.2 + rng.normal(0, obs_std)
        kf = kf_predict(kf, 0.1, 0.05)
        kf = kf_update(kf, obs, obs_std**2)
        ps = pf_step(ps, obs, 0.1, params, rng)
        assert abs(wrap_angle(ps.circular_mean() - kf.azimuth)) < 0.02


def _stream(azimuths_by_time):
    out = []
    for t, az_list in azimuths_by_time:
        for az in az_list:
            out.append(DoaEstimate(t, Doa(az)))
    return out


def test_lifecycle_confirms_after_m_of_n():
    config = TrackerConfig(init_hits=3, init_window=5)
    times = [(0.1 * k, [0.5]) for k in range(10)]
    tracks = track_lifecycle(_stream(times), config)
    assert list(tracks) == [1]
    states = tracks[1]
    assert len(states) == 8  # confirmed at the third hit
    for s in states:
        assert abs(s.azimuth - 0.5) < 0.05


def test_lifecycle_ignores_sporadic_clutter():
    rng = np.random.default_rng(8)
    times = []
    for k in range(30):
        obs = [1.0 + rng.normal(0, 0.01)]
        if k in (4, 13, 22):  # isolated clutter, never twice in a window
            obs.append(float(rng.uniform(-3, -2)))
        times.append((0.1 * k, obs))
    tracks = track_lifecycle(_stream(times), TrackerConfig())
    assert len(tracks) == 1


def test_lifecycle_terminates_after_gap_and_new_id():
    times = [(0.1 * k, [0.5]) for k in range(8)]
    times += [(0.1 * k, []) for k in range(8, 16)]  # 0.8 s silence
    times += [(0.1 * k, [-2.0]) for k in range(16, 24)]
    # keep the clock alive during the gap with a distant steady source
    tracks = track_lifecycle(_stream(times), TrackerConfig())
    assert sorted(tracks) == [1, 2]
    end_of_first = max(s.last_update for s in tracks[1])
    assert end_of_first < 1.3
    for s in tracks[2]:
        assert abs(s.azimuth + 2.0) < 0.05


def test_lifecycle_two_simultaneous_sources():
    times = [(0.1 * k, [0.8, -1.5]) for k in range(20)]
    tracks = track_lifecycle(_stream(times), TrackerConfig())
    assert sorted(tracks) == [1, 2]
    finals = sorted(tracks[i][-1].azimuth for i in (1, 2))
    assert finals[0] == pytest.approx(-1.5, abs=0.05)
    assert finals[1] == pytest.approx(0.8, abs=0.05)


def test_lifecycle_gate_blocks_far_observation():
    # an observation 90 deg away must not drag the track
    times = [(0.1 * k, [0.0]) for k in range(10)]
    times.append((1.0, [math.pi / 2]))
    times += [(0.1 * k, [0.0]) for k in range(11, 16)]
    tracks = track_lifecycle(_stream(times), TrackerConfig())
    for s in tracks[1]:
        assert abs(s.azimuth) < 0.1
