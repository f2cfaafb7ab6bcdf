"""Frame-level DoA estimation.

Four estimators share one STFT front end:

* GCC-PHAT time-delay estimation plus least-squares triangulation,
* SRP-PHAT steered-response-power grid search,
* broadband MUSIC,
* first-order pseudo-intensity for spherical layouts.

Delay convention: ``expected_tdoa(s, m, l)`` and ``gcc_phat`` both measure
the delay of channel m relative to channel l in samples (positive when m
receives later). Far-field steering delays are referenced to the array
centroid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import (
    ArrayGeometry,
    DegenerateGeometryError,
    Doa,
    doa_to_unit_vector,
    unit_vector_to_doa,
    wrap_angle,
)
from .sigproc import CrossSpectrum, cross_power_spectrum

DEFAULT_BAND_HZ = (300.0, 4000.0)
PHAT_FLOOR_REL = 1e-12  # bins below this fraction of max |G| get zero weight


class NoSignalError(ValueError):
    """All-zero input where signal content is required."""


class UnsupportedGeometryError(ValueError):
    pass


class IllConditionedError(ValueError):
    pass


class UnderdeterminedError(ValueError):
    pass


@dataclass(frozen=True)
class TdoaEstimate:
    pair: tuple
    delay: float  # samples, fractional
    confidence: float


@dataclass(frozen=True)
class DoaGrid:
    """Candidate directions for grid-search localizers."""

    directions: tuple
    resolution_deg: float

    def __post_init__(self):
        directions = tuple(self.directions)
        if not directions:
            raise ValueError("empty grid")
        object.__setattr__(self, "directions", directions)

    def __len__(self):
        return len(self.directions)

    @property
    def azimuths(self) -> np.ndarray:
        return np.array([d.azimuth for d in self.directions])

    @property
    def unit_vectors(self) -> np.ndarray:
        return np.array([doa_to_unit_vector(d) for d in self.directions])


def azimuth_grid(resolution_deg: float = 1.0, elevation: float = np.pi / 2) -> DoaGrid:
    """Azimuth-only grid covering [-180, 180) degrees at fixed elevation."""
    n = int(round(360.0 / resolution_deg))
    azimuths = np.radians(-180.0 + resolution_deg * np.arange(n))
    return DoaGrid(tuple(Doa(a, elevation) for a in azimuths), resolution_deg)


def sphere_grid(resolution_deg: float = 2.0) -> DoaGrid:
    """Near-uniform full-sphere grid (Fibonacci lattice) at the given spacing."""
    spacing = np.radians(resolution_deg)
    count = max(int(np.ceil(4.0 * np.pi / spacing**2)), 16)
    golden = np.pi * (3.0 - np.sqrt(5.0))
    i = np.arange(count)
    z = 1.0 - 2.0 * (i + 0.5) / count
    elevation = np.arccos(np.clip(z, -1.0, 1.0))
    azimuth = wrap_angle(golden * i)
    return DoaGrid(tuple(Doa(a, e) for a, e in zip(azimuth, elevation)), resolution_deg)


@dataclass(frozen=True)
class SpatialSpectrum:
    grid: DoaGrid
    values: np.ndarray
    kind: str  # "SRP" | "MUSIC" | "PIV-histogram"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if len(values) != len(self.grid):
            raise ValueError("spectrum length does not match grid")
        if not np.all(np.isfinite(values)):
            raise ValueError("spectrum contains non-finite values")
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class DoaEstimate:
    """A timestamped, labelled direction estimate: the unit of every submission."""

    timestamp: float
    doa: Doa
    source_id: int = 1
    score: float = 0.0

    def __post_init__(self):
        if self.source_id < 1:
            raise ValueError("source_id must be >= 1")


# ---------------------------------------------------------------------------
# TDoA / GCC-PHAT
# ---------------------------------------------------------------------------

def expected_tdoa(source_pos, mic_m, mic_l, f_s: float, c: float = 343.0) -> float:
    """TDoA in samples: (f_s/c) * (||s - x_m|| - ||s - x_l||)."""
    source_pos = np.asarray(source_pos, dtype=float)
    mic_m = np.asarray(mic_m, dtype=float)
    mic_l = np.asarray(mic_l, dtype=float)
    d_m = np.linalg.norm(source_pos - mic_m)
    d_l = np.linalg.norm(source_pos - mic_l)
    if d_m < 1e-9 or d_l < 1e-9:
        raise DegenerateGeometryError("source coincides with a microphone")
    return float(f_s / c * (d_m - d_l))


def farfield_pair_tdoa(unit_dirs, mic_m, mic_l, f_s: float, c: float = 343.0):
    """Far-field TDoA (samples) of pair (m, l) for plane waves from given directions."""
    unit_dirs = np.atleast_2d(np.asarray(unit_dirs, dtype=float))
    baseline = np.asarray(mic_l, dtype=float) - np.asarray(mic_m, dtype=float)
    return f_s / c * unit_dirs @ baseline


def gcc_phat(cs: CrossSpectrum, max_lag: float, interpolation: int = 4) -> TdoaEstimate:
    """Estimate the dominant delay from a phase-transformed cross spectrum.

    The GCC is evaluated on an `interpolation`-times oversampled lag axis and
    the peak refined by parabolic interpolation.
    """
    if interpolation < 1:
        raise ValueError("interpolation factor must be >= 1")
    g = np.asarray(cs.values, dtype=complex)
    mag = np.abs(g)
    peak_mag = mag.max() if mag.size else 0.0
    if peak_mag <= 0.0:
        raise NoSignalError("all-zero cross spectrum")
    weights = np.where(mag > PHAT_FLOOR_REL * peak_mag, 1.0 / np.maximum(mag, 1e-300), 0.0)
    phat = g * weights
    nfft = cs.window_length * interpolation
    cc = np.fft.irfft(phat, n=nfft)
    max_shift = int(np.floor(max_lag * interpolation))
    max_shift = min(max_shift, nfft // 2 - 1)
    if max_shift < 1:
        raise ValueError("max_lag too small for the lag axis")
    cc = np.concatenate((cc[-max_shift:], cc[:max_shift + 1]))
    lags = (np.arange(-max_shift, max_shift + 1)) / interpolation
    idx = int(np.argmax(cc))
    peak = cc[idx]
    delay = lags[idx]
    if 0 < idx < len(cc) - 1:
        y0, y1, y2 = cc[idx - 1], cc[idx], cc[idx + 1]
        denom = y0 - 2 * y1 + y2
        if abs(denom) > 1e-30:
            offset = 0.5 * (y0 - y2) / denom
            offset = float(np.clip(offset, -0.5, 0.5))
            delay += offset / interpolation
    return TdoaEstimate(cs.pair, float(delay), float(peak))


def tdoa_to_azimuth(estimates, geometry: ArrayGeometry, f_s: float,
                    c: float = 343.0, resolution_deg: float = 1.0) -> Doa:
    """Least-squares triangulation of pair delays on a far-field azimuth grid.

    Ties are broken towards the smallest azimuth wrapped into [0, 2*pi).
    """
    estimates = list(estimates)
    if not estimates:
        raise UnderdeterminedError("no TDoA estimates to triangulate")
    grid = azimuth_grid(resolution_deg)
    dirs = grid.unit_vectors
    cost = np.zeros(len(grid))
    for est in estimates:
        m, l = est.pair
        expected = farfield_pair_tdoa(dirs, geometry.mic_positions[m],
                                      geometry.mic_positions[l], f_s, c)
        cost += (est.delay - expected) ** 2
    best = cost.min()
    tied = np.flatnonzero(cost <= best + 1e-9)
    azimuths = grid.azimuths[tied]
    order = np.argsort(np.mod(azimuths, 2.0 * np.pi))
    return grid.directions[tied[order[0]]]


# ---------------------------------------------------------------------------
# SRP-PHAT
# ---------------------------------------------------------------------------

def _band_bins(window_length: int, f_s: float, band_hz):
    bin_count = window_length // 2 + 1
    freqs = np.arange(bin_count) * f_s / window_length
    if band_hz is None:
        mask = (np.arange(bin_count) > 0) & (np.arange(bin_count) < bin_count - 1)
    else:
        mask = (freqs >= band_hz[0]) & (freqs <= band_hz[1])
    bins = np.flatnonzero(mask)
    if bins.size == 0:
        raise ValueError("analysis band holds no frequency bins")
    return bins


def srp_phat(frames, geometry: ArrayGeometry, grid: DoaGrid, f_s: float,
             c: float = 343.0, band_hz=DEFAULT_BAND_HZ) -> SpatialSpectrum:
    """Steered response power with PHAT pre-whitening over a direction grid.

    P(x) = sum over all microphone pairs (self pairs included) of the GCC
    evaluated at the pair's far-field delay for direction x.
    """
    if len(grid) == 0:
        raise ValueError("empty grid")
    if not frames:
        raise ValueError("empty frame block")
    channels = frames[0].channel_count
    if channels < 2:
        raise ValueError("need at least 2 channels")
    window_length = frames[0].window_length
    bins = _band_bins(window_length, f_s, band_hz)
    omega = 2.0 * np.pi * bins / window_length
    dirs = grid.unit_vectors
    mics = geometry.mic_positions - geometry.centroid
    # self terms contribute a direction-independent offset of channels * len(bins)
    values = np.full(len(grid), float(channels * len(bins)))
    for m in range(channels):
        for l in range(m + 1, channels):
            g = cross_power_spectrum(frames, (m, l)).values[bins]
            mag = np.abs(g)
            peak = mag.max()
            if peak <= 0.0:
                continue
            phat = np.where(mag > PHAT_FLOOR_REL * peak, g / np.maximum(mag, 1e-300), 0.0)
            tau = farfield_pair_tdoa(dirs, mics[m], mics[l], f_s, c)
            steer = np.exp(1j * np.outer(tau, omega))
            values += 2.0 * np.real(steer @ phat)
    return SpatialSpectrum(grid, values, "SRP")


def srp_argmax(spectrum: SpatialSpectrum) -> Doa:
    """Direction of the spectrum maximum; ties resolve to the lowest grid index."""
    return spectrum.grid.directions[int(np.argmax(spectrum.values))]


# ---------------------------------------------------------------------------
# MUSIC
# ---------------------------------------------------------------------------

def music_spectrum(frames, geometry: ArrayGeometry, grid: DoaGrid, n_sources: int,
                   f_s: float, c: float = 343.0, band_hz=DEFAULT_BAND_HZ,
                   diagonal_loading: float = 1e-6) -> SpatialSpectrum:
    """Broadband MUSIC pseudo-spectrum.

    Each narrowband spatial correlation matrix is eigendecomposed; the
    pseudo-spectrum scores steering-vector orthogonality to the noise
    subspace. Narrowband spectra are max-normalized and averaged over the
    analysis band.
    """
    if not frames:
        raise ValueError("empty frame block")
    channels = frames[0].channel_count
    if not (1 <= n_sources < channels):
        raise ValueError("need 1 <= n_sources < channel count")
    if len(frames) < channels:
        raise ValueError(
            f"correlation estimate needs >= {channels} frames, got {len(frames)}"
        )
    window_length = frames[0].window_length
    bins = _band_bins(window_length, f_s, band_hz)
    mics = geometry.mic_positions - geometry.centroid
    dirs = grid.unit_vectors
    # steering delays in samples, one per (direction, mic)
    tau = -(f_s / c) * dirs @ mics.T
    stack = np.array([f.bins for f in frames])  # (frames, channels, bins)
    broadband = np.zeros(len(grid))
    for k_idx, k in enumerate(bins):
        snap = stack[:, :, k]  # (frames, channels)
        r = snap.conj().T @ snap / snap.shape[0]
        r = r.T  # E[x x^H] with x the channel vector
        load = diagonal_loading * np.real(np.trace(r)) / channels
        r = r + load * np.eye(channels)
        if np.linalg.cond(r) > 1e12:
            raise IllConditionedError(f"correlation matrix ill-conditioned at bin {k}")
        eigvals, eigvecs = np.linalg.eigh(r)
        u_s = eigvecs[:, channels - n_sources:]
        omega = 2.0 * np.pi * k / window_length
        v = np.exp(-1j * omega * tau)  # (dirs, channels)
        # rows of v are steering vectors; remove their signal-subspace part
        proj = v - (v @ u_s.conj()) @ u_s.T
        denom = np.real(np.einsum("ij,ij->i", proj.conj(), proj))
        narrow = 1.0 / np.maximum(denom, 1e-30)
        broadband += narrow / narrow.max()
    broadband /= len(bins)
    return SpatialSpectrum(grid, broadband, "MUSIC")


# ---------------------------------------------------------------------------
# Pseudo-intensity (spherical layouts)
# ---------------------------------------------------------------------------

def _spherical_mic_directions(geometry: ArrayGeometry) -> np.ndarray:
    mics = geometry.mic_positions - geometry.centroid
    radii = np.linalg.norm(mics, axis=1)
    if geometry.mic_count < 12:
        raise UnsupportedGeometryError(
            "pseudo-intensity needs a near-uniform spherical layout (>= 12 mics)"
        )
    if radii.min() < 1e-6 or (radii.max() - radii.min()) / radii.max() > 0.05:
        raise UnsupportedGeometryError(
            f"array {geometry.name!r} is not spherical enough for pseudo-intensity"
        )
    return mics / radii[:, None]


def pseudo_intensity(frames, geometry: ArrayGeometry, f_s: float,
                     band_hz=DEFAULT_BAND_HZ):
    """Per-frame DoA from the first-order intensity vector of a spherical array.

    An omni eigenbeam and three dipole eigenbeams (free-field spherical
    harmonic projection, no rigid-baffle compensation) approximate the
    acoustic intensity; its direction, in quadrature with the omni beam,
    points towards the arrival direction.
    """
    u = _spherical_mic_directions(geometry)
    if not frames:
        raise ValueError("empty frame block")
    window_length = frames[0].window_length
    bins = _band_bins(window_length, f_s, band_hz)
    estimates = []
    for frame in frames:
        s = frame.bins[:, bins]  # (channels, bins)
        p0 = s.mean(axis=0)
        dipole = (u.T @ s) * (3.0 / geometry.mic_count)  # (3, bins)
        arrival = np.imag(np.conj(p0)[None, :] * dipole).sum(axis=1)
        norm = np.linalg.norm(arrival)
        if norm < 1e-12 * max(np.abs(p0).max(), 1e-300) or np.abs(p0).max() == 0.0:
            raise NoSignalError(
                f"no usable signal in frame at t={frame.frame_center_time:.3f}"
            )
        estimates.append(DoaEstimate(frame.frame_center_time,
                                     unit_vector_to_doa(arrival), 1, float(norm)))
    return estimates
