"""Harmonic sinusoidal model of voiced speech, and jittered resynthesis.

The pipeline is: track F0, fit per-frame amplitude/phase of harmonics
n = 1..H by weighted least squares, subtract the zero-offset
reconstruction to get the non-harmonic residual, then re-render the
harmonics at displaced frequencies

    f_n(t) = n*f0(t) + J_n*f0(t)

and add the residual back unchanged, so everything except the harmonic
frequencies is preserved.

Two phase rules are used. The zero-offset render (residual extraction
and the J = 0 path) aligns to the analyzed phase of every frame with
cubic phase interpolation, so it cancels the original harmonics even
when the tracked F0 carries small errors. Any nonzero-offset render
integrates the displaced instantaneous frequency from the first voiced
frame's analyzed phase, so the rendered frequency obeys the displacement
law exactly at every voiced sample.
"""

import json
import logging
import pathlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.signal

from . import __version__
from .core import Waveform, derive_rng, read_wav, write_wav, CANONICAL_RATE
from .pitch import F0Config, F0Track, track_f0
from .tones import JitterProfile, sample_jitter

log = logging.getLogger(__name__)

MAX_HARMONICS_CAP = 60
MIN_VOICED_RUN = 3  # frames; shorter runs are left to the residual
NYQUIST_MARGIN = 0.95  # analysis stays below this fraction of Nyquist
SIDECAR_SCHEMA = "harmprobe/jitter-sidecar"
SIDECAR_VERSION = 1


class TrackMismatchError(ValueError):
    """F0 track does not line up with the waveform it claims to describe."""


@dataclass(frozen=True)
class HarmonicModel:
    """Sinusoidal decomposition: per-frame harmonic envelopes + residual."""

    f0_track: F0Track
    harmonic_amps: np.ndarray  # (num_frames, max_harmonics), linear, >= 0
    harmonic_phases: np.ndarray  # (num_frames, max_harmonics), radians at frame center
    max_harmonics: int
    residual: Waveform
    sample_rate: int

    @property
    def num_frames(self) -> int:
        return self.f0_track.num_frames


def default_max_harmonics(median_f0: float, sample_rate: int) -> int:
    if median_f0 <= 0:
        return 0
    return int(min(MAX_HARMONICS_CAP, np.floor((sample_rate / 2.0) / median_f0) - 1))


def analyze_harmonics(
    wav: Waveform, f0: F0Track, max_harmonics: int | None = None
) -> HarmonicModel:
    """Fit per-frame harmonic amplitudes and phases by weighted least squares.

    Each voiced frame is modeled as sum_n A_n cos(2*pi*n*f0*(t - t_c) + phi_n)
    under a Hann weight; harmonics above Nyquist at that frame's f0 get
    amplitude 0. The residual is the input minus the zero-offset
    reconstruction, so model + residual is exact by construction.
    """
    _validate_track(wav, f0)
    track = _drop_short_runs(f0)
    if max_harmonics is None:
        max_harmonics = default_max_harmonics(track.median_voiced_f0(), wav.sample_rate)
    max_harmonics = max(0, int(max_harmonics))

    num_frames = track.num_frames
    amps = np.zeros((num_frames, max_harmonics))
    phases = np.zeros((num_frames, max_harmonics))
    if max_harmonics > 0 and np.any(track.voiced):
        _fit_frames(wav, track, amps, phases)

    model = HarmonicModel(
        f0_track=track,
        harmonic_amps=amps,
        harmonic_phases=phases,
        max_harmonics=max_harmonics,
        residual=Waveform(np.zeros(len(wav)), wav.sample_rate),  # placeholder
        sample_rate=wav.sample_rate,
    )
    reconstruction = _render(model, np.zeros(max_harmonics), phase_locked=True)
    residual = Waveform(wav.samples - reconstruction, wav.sample_rate)
    return HarmonicModel(
        f0_track=track,
        harmonic_amps=amps,
        harmonic_phases=phases,
        max_harmonics=max_harmonics,
        residual=residual,
        sample_rate=wav.sample_rate,
    )


def resynthesize(model: HarmonicModel, jitter: JitterProfile) -> Waveform:
    """Render the harmonics at (n + J_n)*f0(t) and add the residual back.

    Harmonics pushed past Nyquist in some frames are attenuated to zero
    there (logged, not an error). Output gain is unity unless the result
    would clip, so unvoiced/residual content passes through bit-exact.
    """
    if jitter.num_harmonics < model.max_harmonics:
        raise ValueError(
            f"jitter profile has {jitter.num_harmonics} offsets, "
            f"model needs {model.max_harmonics}"
        )
    offsets = jitter.offsets[: model.max_harmonics]
    phase_locked = bool(np.all(offsets == 0.0))
    rendered = _render(model, offsets, phase_locked=phase_locked)
    out = rendered + model.residual.samples
    peak = float(np.max(np.abs(out))) if len(out) else 0.0
    if peak > 1.0:
        log.warning("resynthesis would clip (peak %.3f); rescaling output", peak)
        out = out / peak
    return Waveform(out, model.sample_rate)


@dataclass(frozen=True)
class JitterResult:
    waveform: Waveform
    profile: JitterProfile
    model: HarmonicModel


def jitter_utterance(
    wav: Waveform,
    bound: float,
    seed: int,
    config: F0Config | None = None,
    max_harmonics: int | None = None,
) -> JitterResult:
    """Full pipeline with the intermediate products exposed."""
    track = track_f0(wav, config)
    model = analyze_harmonics(wav, track, max_harmonics)
    profile = (
        sample_jitter(bound, model.max_harmonics, seed)
        if model.max_harmonics > 0
        else JitterProfile.zero(0)
    )
    return JitterResult(resynthesize(model, profile), profile, model)


def jitter_speech(
    wav: Waveform,
    bound: float,
    seed: int,
    config: F0Config | None = None,
    max_harmonics: int | None = None,
) -> Waveform:
    """track_f0 -> analyze_harmonics -> sample_jitter -> resynthesize.

    One jitter profile per utterance, shared across all voiced regions.
    """
    return jitter_utterance(wav, bound, seed, config, max_harmonics).waveform


def jitter_directory(
    in_dir,
    out_dir,
    bound: float,
    seed: int,
    pattern: str = "*.wav",
    jobs: int = 1,
    config: F0Config | None = None,
    target_rate: int = CANONICAL_RATE,
) -> list[dict]:
    """Jitter every WAV under in_dir into a mirrored tree under out_dir.

    Per-utterance seeds derive from (seed, relative path), so results do
    not depend on traversal or completion order. A JSON sidecar per
    utterance records the bound, seeds, and the drawn offset vector.
    """
    in_dir = pathlib.Path(in_dir)
    out_dir = pathlib.Path(out_dir)
    paths = sorted(p for p in in_dir.rglob(pattern) if p.is_file())
    if not paths:
        raise FileNotFoundError(f"no files matching {pattern!r} under {in_dir}")

    def process(path: pathlib.Path) -> dict:
        rel = path.relative_to(in_dir)
        utt_seed = int(derive_rng(seed, "utterance", rel.as_posix()).integers(2**63))
        wav = read_wav(path, target_rate=target_rate)
        result = jitter_utterance(wav, bound, utt_seed, config)
        dest = out_dir / rel
        dest.parent.mkdir(parents=True, exist_ok=True)
        write_wav(dest, result.waveform)
        meta = {
            "schema": SIDECAR_SCHEMA,
            "schema_version": SIDECAR_VERSION,
            "toolkit_version": __version__,
            "source": rel.as_posix(),
            "jitter_bound": bound,
            "root_seed": int(seed),
            "utterance_seed": utt_seed,
            "offsets": result.profile.offsets.tolist(),
            "max_harmonics": result.model.max_harmonics,
            "median_f0": result.model.f0_track.median_voiced_f0(),
        }
        dest.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True))
        return meta

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(process, paths))
    return [process(p) for p in paths]


def _validate_track(wav: Waveform, track: F0Track) -> None:
    if track.num_frames == 0:
        raise TrackMismatchError("empty F0 track")
    span_end = track.frame_times[-1] + track.frame / 2.0
    if span_end > wav.duration + track.hop + 1e-9:
        raise TrackMismatchError(
            f"track spans {span_end:.3f} s but waveform is {wav.duration:.3f} s"
        )


def _drop_short_runs(track: F0Track) -> F0Track:
    voiced = track.voiced.copy()
    for start, stop in _runs(voiced):
        if stop - start < MIN_VOICED_RUN:
            voiced[start:stop] = False
    return F0Track(
        frame_times=track.frame_times,
        f0=np.where(voiced, track.f0, 0.0),
        voiced=voiced,
        periodicity=track.periodicity,
        hop=track.hop,
        frame=track.frame,
    )


def _runs(mask: np.ndarray):
    """(start, stop) index pairs of the True runs in mask."""
    edges = np.flatnonzero(np.diff(np.concatenate([[0], mask.astype(np.int8), [0]])))
    return list(zip(edges[0::2], edges[1::2]))


def _fit_frames(wav: Waveform, track: F0Track, amps: np.ndarray, phases: np.ndarray):
    fs = wav.sample_rate
    frame_len = int(round(track.frame * fs))
    half = frame_len // 2
    window = scipy.signal.get_window("hann", frame_len, fftbins=True)
    padded = np.concatenate([np.zeros(half), wav.samples, np.zeros(frame_len)])
    rel = np.arange(frame_len) - half  # sample offsets from frame center
    max_h = amps.shape[1]
    limit = NYQUIST_MARGIN * fs / 2.0

    for i in np.flatnonzero(track.voiced):
        f0 = track.f0[i]
        center = int(round(track.frame_times[i] * fs))
        frame = padded[center : center + frame_len]  # centered thanks to padding
        n_max = min(max_h, int(limit / f0))
        if n_max < 1:
            continue
        harmonics = np.arange(1, n_max + 1)
        omega = 2.0 * np.pi * f0 * harmonics / fs
        arg = np.outer(rel, omega)
        design = np.concatenate([np.cos(arg), np.sin(arg)], axis=1)
        weighted = design * window[:, None]
        gram = weighted.T @ design
        gram.flat[:: gram.shape[0] + 1] += 1e-9 * np.trace(gram) / gram.shape[0]
        rhs = weighted.T @ frame
        coef = np.linalg.solve(gram, rhs)
        cos_c, sin_c = coef[:n_max], coef[n_max:]
        amps[i, :n_max] = np.hypot(cos_c, sin_c)
        # component is A*cos(omega*(t - t_c) + phi)
        phases[i, :n_max] = np.arctan2(-sin_c, cos_c)


def _render(model: HarmonicModel, offsets: np.ndarray, phase_locked: bool) -> np.ndarray:
    track = model.f0_track
    fs = model.sample_rate
    out = np.zeros(len(model.residual))
    if model.max_harmonics == 0:
        return out
    hop_samps = track.hop * fs
    nyq = fs / 2.0
    clipped_frames = 0

    for start, stop in _runs(track.voiced):
        if stop - start < 2:
            continue
        centers = track.frame_times[start:stop] * fs
        f0_frames = track.f0[start:stop]
        seg_lo = int(max(0, np.floor(centers[0] - hop_samps)))
        seg_hi = int(min(len(out), np.ceil(centers[-1] + hop_samps) + 1))
        s_idx = np.arange(seg_lo, seg_hi, dtype=np.float64)
        f0_samples = np.interp(s_idx, centers, f0_frames)

        for k in range(model.max_harmonics):
            ratio = (k + 1) + offsets[k]
            amp_frames = model.harmonic_amps[start:stop, k]
            if not np.any(amp_frames > 0):
                continue
            amp_x = np.concatenate([[centers[0] - hop_samps], centers, [centers[-1] + hop_samps]])
            amp_y = np.concatenate([[0.0], amp_frames, [0.0]])
            amp = np.interp(s_idx, amp_x, amp_y)
            freq = ratio * f0_samples
            over = freq >= nyq
            if np.any(over):
                amp = np.where(over, 0.0, amp)
                clipped_frames += 1
            if phase_locked:
                theta = _locked_phase(
                    s_idx, centers, f0_frames, model.harmonic_phases[start:stop, k], k + 1, fs
                )
            else:
                theta = _integrated_phase(
                    s_idx, freq, centers[0], model.harmonic_phases[start, k], fs
                )
            out[seg_lo:seg_hi] += amp * np.cos(theta)

    if clipped_frames:
        log.info("attenuated %d harmonic/run pairs that crossed Nyquist", clipped_frames)
    return out


def _integrated_phase(s_idx, freq, anchor_center, anchor_phase, fs):
    """Phase by integrating the instantaneous frequency, anchored to the
    analyzed phase at the run's first frame center."""
    phase = 2.0 * np.pi * np.cumsum(freq) / fs
    anchor_idx = int(np.clip(round(anchor_center - s_idx[0]), 0, len(s_idx) - 1))
    return phase - phase[anchor_idx] + anchor_phase


def _locked_phase(s_idx, centers, f0_frames, phase_frames, harmonic, fs):
    """Cubic phase interpolation hitting every analyzed frame phase with the
    analyzed frequency as the slope at each frame center."""
    omega = 2.0 * np.pi * harmonic * f0_frames / fs  # rad per sample
    theta_nodes = np.empty(len(centers))
    theta_nodes[0] = phase_frames[0]
    for i in range(len(centers) - 1):
        delta = centers[i + 1] - centers[i]
        predicted = theta_nodes[i] + 0.5 * (omega[i] + omega[i + 1]) * delta
        wraps = np.round((predicted - phase_frames[i + 1]) / (2.0 * np.pi))
        theta_nodes[i + 1] = phase_frames[i + 1] + 2.0 * np.pi * wraps

    if len(centers) == 1:
        return theta_nodes[0] + omega[0] * (s_idx - centers[0])

    seg = np.clip(np.searchsorted(centers, s_idx, side="right") - 1, 0, len(centers) - 2)
    delta = np.diff(centers)
    dp = np.diff(theta_nodes)
    m0, m1 = omega[:-1], omega[1:]
    a = (3.0 * dp / delta - (2.0 * m0 + m1)) / delta
    b = (-2.0 * dp / delta + (m0 + m1)) / delta**2
    tau = s_idx - centers[seg]
    theta = theta_nodes[seg] + m0[seg] * tau + a[seg] * tau**2 + b[seg] * tau**3
    before = s_idx < centers[0]
    after = s_idx > centers[-1]
    theta[before] = theta_nodes[0] + omega[0] * (s_idx[before] - centers[0])
    theta[after] = theta_nodes[-1] + omega[-1] * (s_idx[after] - centers[-1])
    return theta
