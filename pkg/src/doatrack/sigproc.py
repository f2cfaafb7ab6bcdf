"""Multichannel buffers, framing, and cross-power spectra.

Shared STFT front end for all localizers. Spectra are one-sided (real
input); bin k corresponds to normalized frequency ``2*pi*k/window_length``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import get_window

DEFAULT_SAMPLE_RATE = 48000
DEFAULT_WINDOW_LENGTH = 2048
DEFAULT_HOP = 1024


@dataclass(frozen=True)
class MultichannelAudio:
    """Channel-major audio: samples[channel][n], all channels equal length."""

    samples: np.ndarray
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE
    start_time: float = 0.0

    def __post_init__(self):
        samples = np.atleast_2d(np.asarray(self.samples, dtype=float))
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")
        object.__setattr__(self, "samples", samples)

    @property
    def channel_count(self) -> int:
        return self.samples.shape[0]

    @property
    def length(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        return self.length / self.sample_rate_hz


@dataclass(frozen=True)
class SpectralFrame:
    """One-sided multichannel spectrum of a single analysis frame."""

    bins: np.ndarray  # (channels, bin_count) complex
    frame_center_time: float
    window_length: int
    hop: int

    @property
    def bin_count(self) -> int:
        return self.bins.shape[1]

    @property
    def channel_count(self) -> int:
        return self.bins.shape[0]


@dataclass(frozen=True)
class CrossSpectrum:
    """Cross-power spectrum G_{m,l}(w) averaged over a frame block."""

    values: np.ndarray  # (bin_count,) complex
    pair: tuple
    window_length: int


def frame_signal(audio: MultichannelAudio, window_length: int = DEFAULT_WINDOW_LENGTH,
                 hop: int = DEFAULT_HOP, window: str = "hann"):
    """Slice the signal into tapered frames and transform each to the frequency domain.

    Frame k covers samples [k*hop, k*hop + window_length). Returns a list of
    SpectralFrame; a signal shorter than one window yields an empty list.
    """
    if hop < 1:
        raise ValueError("hop must be >= 1")
    if window_length < 1:
        raise ValueError("window_length must be >= 1")
    n = audio.length
    if window_length > n:
        return []
    if window in ("rect", "rectangular", "boxcar"):
        taper = np.ones(window_length)
    else:
        taper = get_window(window, window_length, fftbins=True)
    frames = []
    n_frames = (n - window_length) // hop + 1
    fs = audio.sample_rate_hz
    for k in range(n_frames):
        start = k * hop
        segment = audio.samples[:, start:start + window_length] * taper
        bins = np.fft.rfft(segment, axis=1)
        center = audio.start_time + (start + window_length / 2) / fs
        frames.append(SpectralFrame(bins, center, window_length, hop))
    return frames


def cross_power_spectrum(frames, pair, averaging_frames: int | None = None) -> CrossSpectrum:
    """Block-mean cross-power spectrum G_{m,l} = mean_k S_m(k) conj(S_l(k))."""
    if not frames:
        raise ValueError("empty frame block")
    if averaging_frames is None:
        averaging_frames = len(frames)
    if averaging_frames < 1:
        raise ValueError("averaging_frames must be >= 1")
    m, l = pair
    channels = frames[0].channel_count
    if not (0 <= m < channels and 0 <= l < channels):
        raise ValueError(f"channel pair {pair} out of range for {channels} channels")
    block = frames[:averaging_frames]
    acc = np.zeros(frames[0].bin_count, dtype=complex)
    for frame in block:
        acc += frame.bins[m] * np.conj(frame.bins[l])
    acc /= len(block)
    return CrossSpectrum(acc, (m, l), frames[0].window_length)


def frame_block_matrix(frames) -> np.ndarray:
    """Stack a frame block as an array of shape (frames, channels, bins)."""
    return np.array([f.bins for f in frames])
