import numpy as np
import pytest

from doatrack.sigproc import (MultichannelAudio, cross_power_spectrum,
                              frame_block_matrix, frame_signal)


def _tone(freq, fs, n, phase=0.0):
    return np.cos(2 * np.pi * freq * np.arange(n) / fs + phase)


def test_frame_count_and_coverage():
    audio = MultichannelAudio(np.zeros((2, 48000)), 48000)
    frames = frame_signal(audio, window_length=2048, hop=1024)
    assert len(frames) == (48000 - 2048) // 1024 + 1
    assert frames[0].channel_count == 2
    assert frames[0].bin_count == 1025


def test_frame_center_times():
    fs = 48000
    audio = MultichannelAudio(np.zeros((1, 8192)), fs)
    frames = frame_signal(audio, 2048, 1024)
    for k, f in enumerate(frames):
        assert f.frame_center_time == pytest.approx((k * 1024 + 1024) / fs)


def test_short_signal_yields_no_frames():
    audio = MultichannelAudio(np.zeros((1, 100)), 48000)
    assert frame_signal(audio, 2048, 1024) == []


def test_invalid_hop():
    audio = MultichannelAudio(np.zeros((1, 4096)), 48000)
    with pytest.raises(ValueError):
        frame_signal(audio, 2048, 0)


def test_rect_window_tone_lands_on_its_bin():
    # bin-aligned tone with a rectangular window: all energy in one bin
    fs, n = 48000, 2048
    k = 100
    audio = MultichannelAudio(_tone(k * fs / n, fs, n)[None, :], fs)
    frames = frame_signal(audio, n, n, window="rect")
    mags = np.abs(frames[0].bins[0])
    assert np.argmax(mags) == k
    others = np.delete(mags, k)
    assert others.max() < 1e-6 * mags[k]


def test_cross_spectrum_phase_encodes_delay():
    # channel 1 delayed (circularly) by d samples: G_{0,1} has phase +omega*d
    fs, n, d = 48000, 2048, 5
    rng = np.random.default_rng(0)
    base = rng.standard_normal(n)
    audio = MultichannelAudio(np.stack([base, np.roll(base, d)]), fs)
    frames = frame_signal(audio, n, n, window="rect")
    cs = cross_power_spectrum(frames, (0, 1))
    k = np.arange(30, 200)
    phase = np.angle(cs.values[k])
    expected = np.angle(np.exp(1j * 2 * np.pi * k * d / n))
    assert np.allclose(phase, expected, atol=1e-6)


def test_cross_spectrum_block_average():
    rng = np.random.default_rng(1)
    audio = MultichannelAudio(rng.standard_normal((2, 8192)), 48000)
    frames = frame_signal(audio, 2048, 2048)
    cs_all = cross_power_spectrum(frames, (0, 1))
    manual = np.mean([f.bins[0] * np.conj(f.bins[1]) for f in frames], axis=0)
    assert np.allclose(cs_all.values, manual)


def test_cross_spectrum_conjugate_symmetry_in_pair_order():
    rng = np.random.default_rng(2)
    audio = MultichannelAudio(rng.standard_normal((2, 4096)), 48000)
    frames = frame_signal(audio, 2048, 1024)
    a = cross_power_spectrum(frames, (0, 1)).values
    b = cross_power_spectrum(frames, (1, 0)).values
    assert np.allclose(a, np.conj(b))


def test_cross_spectrum_pair_out_of_range():
    audio = MultichannelAudio(np.zeros((2, 4096)), 48000)
    frames = frame_signal(audio, 2048, 1024)
    with pytest.raises(ValueError):
        cross_power_spectrum(frames, (0, 5))


def test_frame_block_matrix_shape():
    audio = MultichannelAudio(np.zeros((3, 8192)), 48000)
    frames = frame_signal(audio, 2048, 1024)
    block = frame_block_matrix(frames[:4])
    assert block.shape == (4, 3, 1025)


def test_multichannel_audio_single_channel_promotion():
    audio = MultichannelAudio(np.zeros(1000), 48000)
    assert audio.channel_count == 1
    assert audio.length == 1000
    assert audio.duration == pytest.approx(1000 / 48000)
