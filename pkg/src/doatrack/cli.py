"""Command-line driver: simulate scenes, run localizer+tracker pipelines,
evaluate submissions, and print reports.

Exit codes: 0 success, 1 usage/config error, 2 data error. Option
precedence: built-in defaults < --config file < explicit flags. Every
command writes a manifest (config hash, seed, version) beside its outputs;
the manifest contains no wall-clock fields so reruns are byte-identical.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .corpus_io import (CorpusFormatError, bundle_from_scene, read_recording,
                        read_submission, write_recording, write_submission)
from .evaluate import (OspaParams, Submission, evaluate_submission)
from .geometry import Doa, get_array_preset, wrap_angle
from .localize import (DoaEstimate, NoSignalError, UnsupportedGeometryError,
                       azimuth_grid, gcc_phat, music_spectrum, pseudo_intensity,
                       srp_argmax, srp_phat, tdoa_to_azimuth)
from .sigproc import cross_power_spectrum, frame_signal
from .simulate import synthesize, task_preset
from .track import (ParticleSet, PfParams, TrackerConfig, TrackState,
                    WrappedMixture, pf_step, track_lifecycle,
                    wrapped_kf_predict, wrapped_kf_update)

EVAL_RATE_HZ = 120.0
LOCALIZERS = ("srp-phat", "music", "gcc-phat", "pseudo-intensity")
TRACKERS = ("kalman", "wrapped-kalman", "particle", "none")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# Pipeline stages
# ---------------------------------------------------------------------------

def localize_stream(audio, geometry, localizer: str, f_s: float,
                    n_sources: int = 1, block_frames: int = 8,
                    block_stride: int = 4, window_length: int = 2048,
                    hop: int = 1024, band_hz=(300.0, 4000.0),
                    c: float = 343.0, grid_resolution_deg: float = 1.0):
    """Frame the audio and emit time-ordered azimuth estimates.

    Blocks whose broadband power sits at the noise floor are skipped so
    pauses between utterances do not feed garbage to the tracker.
    """
    if localizer not in LOCALIZERS:
        raise UsageError(f"unknown localizer {localizer!r}")
    if localizer == "pseudo-intensity":
        # fail before touching audio when the geometry cannot support it
        from .localize import _spherical_mic_directions
        _spherical_mic_directions(geometry)
    frames = frame_signal(audio, window_length, hop)
    if localizer == "music":
        # the correlation estimate needs at least one frame per channel
        block_frames = max(block_frames, geometry.mic_count)
    blocks = []
    for start in range(0, len(frames) - block_frames + 1, block_stride):
        blocks.append(frames[start:start + block_frames])
    if not blocks:
        return []
    energies = np.array([
        np.mean([np.mean(np.abs(f.bins) ** 2) for f in b]) for b in blocks
    ])
    threshold = 0.05 * np.percentile(energies, 90)
    grid = azimuth_grid(grid_resolution_deg)
    estimates = []
    for block, energy in zip(blocks, energies):
        if energy < threshold:
            continue
        t = 0.5 * (block[0].frame_center_time + block[-1].frame_center_time)
        try:
            if localizer == "srp-phat":
                doa = srp_argmax(srp_phat(block, geometry, grid, f_s, c, band_hz))
                estimates.append(DoaEstimate(t, doa))
            elif localizer == "music":
                spec = music_spectrum(block, geometry, grid, n_sources, f_s, c, band_hz)
                for az in _circular_peaks(grid.azimuths, spec.values, n_sources):
                    estimates.append(DoaEstimate(t, Doa(az)))
            elif localizer == "gcc-phat":
                tdoas = []
                mics = geometry.mic_positions
                for m, l in geometry.pairs():
                    cs = cross_power_spectrum(block, (m, l))
                    max_lag = f_s / c * float(np.linalg.norm(mics[l] - mics[m])) + 1.0
                    tdoas.append(gcc_phat(cs, max_lag))
                doa = tdoa_to_azimuth(tdoas, geometry, f_s, c, grid_resolution_deg)
                estimates.append(DoaEstimate(t, doa))
            else:  # pseudo-intensity
                per_frame = pseudo_intensity(block, geometry, f_s, band_hz)
                az = [e.doa.azimuth for e in per_frame]
                mean_az = math.atan2(np.mean(np.sin(az)), np.mean(np.cos(az)))
                estimates.append(DoaEstimate(t, Doa(wrap_angle(mean_az))))
        except NoSignalError:
            continue
    return estimates


def _circular_peaks(azimuths, values, k: int, min_sep_deg: float = 10.0):
    """Top-k local maxima of a spectrum on a circular azimuth grid."""
    n = len(values)
    is_peak = (values >= np.roll(values, 1)) & (values > np.roll(values, -1))
    order = np.argsort(values[is_peak])[::-1]
    candidates = np.flatnonzero(is_peak)[order]
    picked = []
    min_sep = math.radians(min_sep_deg)
    for idx in candidates:
        az = azimuths[idx]
        if all(abs(wrap_angle(az - p)) >= min_sep for p in picked):
            picked.append(az)
        if len(picked) == k:
            break
    if not picked and n:
        picked.append(azimuths[int(np.argmax(values))])
    return picked


def _single_track_filter(estimates, tracker: str, seed: int,
                         config: TrackerConfig = TrackerConfig()):
    """Run one wrapped-Kalman or particle filter over the estimate stream.

    Multi-estimate timestamps keep only the estimate nearest the current
    state. Returns [(t, azimuth), ...] under one track id.
    """
    by_time: dict = {}
    for est in estimates:
        by_time.setdefault(est.timestamp, []).append(est.doa.azimuth)
    timestamps = sorted(by_time)
    if not timestamps:
        return []
    obs_var = config.obs_noise_std ** 2
    rng = np.random.default_rng(seed)
    out = []
    first_obs = by_time[timestamps[0]][0]
    if tracker == "wrapped-kalman":
        state = TrackState(mean=np.array([first_obs, 0.0]),
                           covariance=np.diag([obs_var, config.initial_rate_var]))
        mix = WrappedMixture.from_state(state)
        out.append((timestamps[0], mix.circular_mean()))
        prev_t = timestamps[0]
        for t in timestamps[1:]:
            mix = wrapped_kf_predict(mix, t - prev_t, config.process_intensity)
            obs = min(by_time[t], key=lambda a: abs(wrap_angle(a - mix.circular_mean())))
            mix = wrapped_kf_update(mix, obs, obs_var)
            out.append((t, mix.circular_mean()))
            prev_t = t
    else:  # particle
        n_particles = 500
        params = PfParams(process_intensity=config.process_intensity,
                          obs_noise_var=obs_var)
        particles = np.column_stack([
            wrap_angle(first_obs + math.sqrt(obs_var) * rng.standard_normal(n_particles)),
            rng.normal(0.0, math.sqrt(config.initial_rate_var), n_particles),
        ])
        ps = ParticleSet(particles, np.full(n_particles, 1.0 / n_particles))
        out.append((timestamps[0], ps.circular_mean()))
        prev_t = timestamps[0]
        for t in timestamps[1:]:
            obs = min(by_time[t], key=lambda a: abs(wrap_angle(a - ps.circular_mean())))
            ps = pf_step(ps, obs, t - prev_t, params, rng)
            out.append((t, ps.circular_mean()))
            prev_t = t
    return out


def track_stream(estimates, tracker: str, seed: int = 0,
                 config: TrackerConfig = TrackerConfig()):
    """Turn raw estimates into labelled track series {id: [(t, azimuth), ...]}."""
    if tracker not in TRACKERS:
        raise UsageError(f"unknown tracker {tracker!r}")
    if tracker == "none":
        tracks: dict = {}
        for est in estimates:
            tracks.setdefault(est.source_id, []).append((est.timestamp,
                                                         est.doa.azimuth))
        return tracks
    if tracker == "kalman":
        results = track_lifecycle(estimates, config)
        return {tid: [(s.last_update, s.azimuth) for s in states]
                for tid, states in results.items()}
    series = _single_track_filter(estimates, tracker, seed, config)
    return {1: series} if series else {}


def resample_tracks(tracks: dict, clock) -> Submission:
    """Interpolate each track's azimuth onto the evaluation clock."""
    clock = np.asarray(clock, dtype=float)
    frames: dict = {}
    for tid, series in tracks.items():
        if not series:
            continue
        times = np.array([t for t, _ in series])
        unwrapped = np.unwrap(np.array([a for _, a in series]))
        inside = (clock >= times[0]) & (clock <= times[-1])
        az = np.interp(clock[inside], times, unwrapped)
        for t, a in zip(clock[inside], az):
            frames.setdefault(float(t), []).append((tid, Doa(wrap_angle(a))))
    return Submission({t: tuple(v) for t, v in frames.items()})


def run_pipeline(bundle, localizer: str, tracker: str, n_sources: int = 1,
                 seed: int = 0, clock=None, **localizer_kwargs) -> Submission:
    """Recording bundle in, submission out: frontend, localizer, tracker, resample."""
    geometry = get_array_preset(bundle.metadata["array"])
    f_s = bundle.audio.sample_rate_hz
    estimates = localize_stream(bundle.audio, geometry, localizer, f_s,
                                n_sources=n_sources, **localizer_kwargs)
    tracks = track_stream(estimates, tracker, seed=seed)
    if clock is None:
        clock = bundle.array_trajectory.timestamps
    return resample_tracks(tracks, clock)


# ---------------------------------------------------------------------------
# Option plumbing
# ---------------------------------------------------------------------------

def _merge_options(defaults: dict, args: argparse.Namespace) -> dict:
    """defaults < config file < explicit flags."""
    merged = dict(defaults)
    config_path = getattr(args, "config", None)
    if config_path:
        path = Path(config_path)
        if not path.is_file():
            raise FileNotFoundError(f"missing config file: {path}")
        try:
            loaded = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"{path}: invalid JSON at line {exc.lineno}") from None
        unknown = set(loaded) - set(defaults)
        if unknown:
            raise UsageError(f"{path}: unknown options {sorted(unknown)}")
        merged.update(loaded)
    for key in defaults:
        value = getattr(args, key.replace("-", "_"), None)
        if value is not None:
            merged[key] = value
    return merged


def _write_manifest(out_dir: Path, command: str, options: dict) -> None:
    canonical = json.dumps(options, sort_keys=True)
    manifest = {
        "command": command,
        "config": options,
        "config_sha256": hashlib.sha256(canonical.encode()).hexdigest(),
        "seed": options.get("seed"),
        "version": __version__,
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2,
                                                      sort_keys=True))


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

SIMULATE_DEFAULTS = {
    "task": 1, "seed": 0, "duration": 10.0, "array": "robot_head",
    "snr": 20.0,
}


def cmd_simulate(args) -> int:
    opts = _merge_options(SIMULATE_DEFAULTS, args)
    if not 1 <= int(opts["task"]) <= 6:
        raise UsageError(f"task must be 1..6, got {opts['task']}")
    config = task_preset(int(opts["task"]), int(opts["seed"]),
                         duration=float(opts["duration"]),
                         array=str(opts["array"]), snr_db=float(opts["snr"]))
    scene = synthesize(config)
    out = Path(args.out)
    bundle = bundle_from_scene(scene, recording_id=out.name or "sim")
    write_recording(bundle, out)
    _write_manifest(out, "simulate", opts)
    print(f"wrote scene: {out} ({scene.audio.channel_count} ch, "
          f"{scene.audio.duration:.2f} s)")
    return 0


RUN_DEFAULTS = {
    "localizer": "srp-phat", "tracker": "kalman", "n_sources": 1, "seed": 0,
    "block_frames": 8, "block_stride": 4, "window": 2048, "hop": 1024,
    "band_low": 300.0, "band_high": 4000.0,
}


def cmd_run(args) -> int:
    opts = _merge_options(RUN_DEFAULTS, args)
    if opts["localizer"] not in LOCALIZERS:
        raise UsageError(f"unknown localizer {opts['localizer']!r}")
    if opts["tracker"] not in TRACKERS:
        raise UsageError(f"unknown tracker {opts['tracker']!r}")
    bundle = read_recording(args.input)
    submission = run_pipeline(
        bundle, opts["localizer"], opts["tracker"],
        n_sources=int(opts["n_sources"]), seed=int(opts["seed"]),
        block_frames=int(opts["block_frames"]),
        block_stride=int(opts["block_stride"]),
        window_length=int(opts["window"]), hop=int(opts["hop"]),
        band_hz=(float(opts["band_low"]), float(opts["band_high"])),
    )
    out = Path(args.out)
    write_submission(submission, out)
    _write_manifest(out.parent, "run", opts)
    n_rows = sum(len(submission.at(t)) for t in submission.timestamps)
    print(f"wrote submission: {out} ({n_rows} rows, "
          f"{submission.max_id} track id(s))")
    return 0


EVALUATE_DEFAULTS = {
    "gate": 30.0, "ospa_p": "1,5", "ospa_c": 30.0, "ospa_series": False,
}


def cmd_evaluate(args) -> int:
    opts = _merge_options(EVALUATE_DEFAULTS, args)
    bundle = read_recording(args.input)
    if bundle.source_trajectories is None or bundle.vaps is None:
        raise CorpusFormatError(
            f"{args.input}: recording has no ground truth (evaluation split?)")
    submission = read_submission(args.submission)
    clock = bundle.array_trajectory.timestamps
    clock_set = {round(float(t), 6) for t in clock}
    for t in submission.timestamps:
        if round(float(t), 6) not in clock_set:
            raise CorpusFormatError(
                f"{args.submission}: timestamp {t} is not on the evaluation clock")
    p_values = [float(p) for p in str(opts["ospa_p"]).split(",") if p]
    ospa_params = tuple(OspaParams(p, float(opts["ospa_c"])) for p in p_values)
    report = evaluate_submission(
        bundle.source_trajectories, bundle.array_trajectory, bundle.vaps,
        submission, clock, recording_duration=bundle.audio.duration,
        gate_deg=float(opts["gate"]), ospa_params=ospa_params,
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    flat = report.to_dict()
    (out_dir / "metrics.json").write_text(json.dumps(flat, indent=2, sort_keys=True))
    keys = sorted(flat)
    with open(out_dir / "metrics.csv", "w") as fh:
        fh.write(",".join(keys) + "\n")
        fh.write(",".join(str(flat[k]) for k in keys) + "\n")
    if opts["ospa_series"]:
        with open(out_dir / "ospa_series.csv", "w") as fh:
            fh.write("timestamp," + ",".join(
                f"ospa_p{p:g}_c{c:g}" for (p, c) in report.ospa) + "\n")
            series = list(report.ospa.values())
            for i, t in enumerate(clock):
                fh.write(f"{t:.6f}," + ",".join(
                    f"{s.values[i]:.6f}" for s in series) + "\n")
    _write_manifest(out_dir, "evaluate", opts)
    _print_summary(flat)
    return 0


def _print_summary(flat: dict) -> None:
    rows = [(k, flat[k]) for k in sorted(flat)]
    width = max(len(k) for k, _ in rows)
    print("-" * (width + 14))
    for key, value in rows:
        if isinstance(value, float):
            print(f"{key:<{width}}  {value:>10.4f}")
        else:
            print(f"{key:<{width}}  {value}")
    print("-" * (width + 14))


def cmd_report(args) -> int:
    for path in args.metrics:
        p = Path(path)
        if not p.is_file():
            raise FileNotFoundError(f"missing metrics file: {p}")
        print(f"== {p} ==")
        _print_summary(json.loads(p.read_text()))
    return 0


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="doatrack",
                     description="Sound-source localization and tracking toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="synthesize a scene to disk")
    p_sim.add_argument("--task", type=int, default=None, help="scenario 1..6")
    p_sim.add_argument("--seed", type=int, default=None)
    p_sim.add_argument("--duration", type=float, default=None, help="seconds")
    p_sim.add_argument("--array", type=str, default=None)
    p_sim.add_argument("--snr", type=float, default=None, help="dB")
    p_sim.add_argument("--config", type=str, default=None, help="JSON options file")
    p_sim.add_argument("--out", type=str, required=True)
    p_sim.set_defaults(func=cmd_simulate)

    p_run = sub.add_parser("run", help="localize and track a recording")
    p_run.add_argument("--input", type=str, required=True, help="recording directory")
    p_run.add_argument("--localizer", type=str, default=None, choices=LOCALIZERS)
    p_run.add_argument("--tracker", type=str, default=None, choices=TRACKERS)
    p_run.add_argument("--n-sources", type=int, default=None)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--block-frames", type=int, default=None)
    p_run.add_argument("--block-stride", type=int, default=None)
    p_run.add_argument("--window", type=int, default=None)
    p_run.add_argument("--hop", type=int, default=None)
    p_run.add_argument("--band-low", type=float, default=None)
    p_run.add_argument("--band-high", type=float, default=None)
    p_run.add_argument("--config", type=str, default=None)
    p_run.add_argument("--out", type=str, required=True, help="submission file")
    p_run.set_defaults(func=cmd_run)

    p_eval = sub.add_parser("evaluate", help="score a submission against ground truth")
    p_eval.add_argument("--input", type=str, required=True, help="recording directory")
    p_eval.add_argument("--submission", type=str, required=True)
    p_eval.add_argument("--gate", type=float, default=None, help="degrees")
    p_eval.add_argument("--ospa-p", type=str, default=None, help="comma list, e.g. 1,5")
    p_eval.add_argument("--ospa-c", type=float, default=None, help="cutoff, degrees")
    p_eval.add_argument("--ospa-series", action="store_true", default=None)
    p_eval.add_argument("--config", type=str, default=None)
    p_eval.add_argument("--out", type=str, required=True, help="report directory")
    p_eval.set_defaults(func=cmd_evaluate)

    p_rep = sub.add_parser("report", help="print stored metrics")
    p_rep.add_argument("metrics", nargs="+", help="metrics.json files")
    p_rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"doatrack: error: {exc}", file=sys.stderr)
        return 1
    except (FileNotFoundError, CorpusFormatError, UnsupportedGeometryError,
            ValueError) as exc:
        print(f"doatrack: data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
