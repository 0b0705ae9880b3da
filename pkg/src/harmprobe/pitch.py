"""Difference-function (YIN-style) fundamental frequency tracking.

Per frame: squared difference function over candidate lags, cumulative
mean normalization, absolute-threshold lag pick with parabolic
refinement. Periodicity is 1 minus the normalized difference at the
chosen lag; frames below the periodicity threshold (or below the silence
floor) are unvoiced with f0 = 0.
"""

from dataclasses import dataclass

import numpy as np
import scipy.signal

from .core import Waveform

DEFAULT_FRAME = 0.025
DEFAULT_HOP = 0.005
DEFAULT_FMIN = 60.0
DEFAULT_FMAX = 400.0
DEFAULT_VOICING_THRESHOLD = 0.5  # periodicity >= threshold -> voiced
YIN_THRESHOLD = 0.1  # absolute dip threshold on the normalized difference
SILENCE_RMS = 1e-4


@dataclass(frozen=True)
class F0Config:
    frame: float = DEFAULT_FRAME
    hop: float = DEFAULT_HOP
    fmin: float = DEFAULT_FMIN
    fmax: float = DEFAULT_FMAX
    voicing_threshold: float = DEFAULT_VOICING_THRESHOLD


@dataclass(frozen=True)
class F0Track:
    """Framewise F0 estimates with voicing decisions.

    frame_times are window centers, strictly increasing with constant hop.
    Unvoiced frames carry f0 = 0.
    """

    frame_times: np.ndarray
    f0: np.ndarray
    voiced: np.ndarray
    periodicity: np.ndarray
    hop: float
    frame: float

    def __post_init__(self):
        for name in ("frame_times", "f0", "periodicity"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        object.__setattr__(self, "voiced", np.asarray(self.voiced, dtype=bool))
        n = len(self.frame_times)
        if not (len(self.f0) == len(self.voiced) == len(self.periodicity) == n):
            raise ValueError("F0Track arrays must share one length")
        if np.any(self.f0[~self.voiced] != 0.0):
            raise ValueError("unvoiced frames must have f0 = 0")

    @property
    def num_frames(self) -> int:
        return len(self.frame_times)

    def median_voiced_f0(self) -> float:
        voiced_f0 = self.f0[self.voiced]
        return float(np.median(voiced_f0)) if len(voiced_f0) else 0.0


def constant_f0_track(
    f0: float, duration: float, config: F0Config | None = None
) -> F0Track:
    """Perfect all-voiced track at a fixed f0 (test/synthesis helper)."""
    config = config or F0Config()
    num = max(1, 1 + int(np.floor((duration - config.frame) / config.hop)))
    times = np.arange(num) * config.hop + config.frame / 2.0
    return F0Track(
        frame_times=times,
        f0=np.full(num, float(f0)),
        voiced=np.ones(num, dtype=bool),
        periodicity=np.ones(num),
        hop=config.hop,
        frame=config.frame,
    )


def track_f0(wav: Waveform, config: F0Config | None = None) -> F0Track:
    """Estimate F0 per frame with the difference-function method.

    Pure silence yields an all-unvoiced track; this never raises on
    content. 25 ms frames, 5 ms hop, 60-400 Hz search by default.
    """
    config = config or F0Config()
    fs = wav.sample_rate
    frame_len = int(round(config.frame * fs))
    hop = int(round(config.hop * fs))
    tau_min = max(2, int(np.floor(fs / config.fmax)))
    tau_max = int(np.ceil(fs / config.fmin))
    if tau_min >= tau_max:
        raise ValueError(f"empty lag range for fmin={config.fmin}, fmax={config.fmax}")

    num_frames = max(0, 1 + (len(wav) - frame_len) // hop)
    times = np.arange(num_frames) * config.hop + config.frame / 2.0
    f0 = np.zeros(num_frames)
    periodicity = np.zeros(num_frames)
    if num_frames == 0:
        return F0Track(times, f0, np.zeros(0, dtype=bool), periodicity,
                       config.hop, config.frame)

    # each frame needs frame_len + tau_max samples of lag context
    padded = np.concatenate([wav.samples, np.zeros(tau_max)])
    span = frame_len + tau_max
    starts = hop * np.arange(num_frames)
    segments = padded[starts[:, None] + np.arange(span)[None, :]]

    diff = _difference_function(segments, frame_len, tau_max)
    cmndf = _cumulative_mean_normalized(diff)

    frame_rms = np.sqrt(np.mean(segments[:, :frame_len] ** 2, axis=1))
    for i in range(num_frames):
        if frame_rms[i] < SILENCE_RMS:
            continue
        tau, dip = _pick_lag(cmndf[i], tau_min, tau_max)
        if tau is None:
            continue
        periodicity[i] = float(np.clip(1.0 - dip, 0.0, 1.0))
        f0[i] = fs / tau

    voiced = (periodicity >= config.voicing_threshold) & (f0 >= config.fmin) & (f0 <= config.fmax)
    f0 = np.where(voiced, f0, 0.0)
    if np.any(voiced):
        # 3-point median on the voiced contour knocks out isolated octave slips
        smoothed = scipy.signal.medfilt(np.where(voiced, f0, np.nan), kernel_size=3)
        keep = voiced & ~np.isnan(smoothed)
        f0[keep] = smoothed[keep]
    return F0Track(times, f0, voiced, periodicity, config.hop, config.frame)


def _difference_function(segments: np.ndarray, frame_len: int, tau_max: int) -> np.ndarray:
    """d[i, tau] = sum_j (x[j] - x[j+tau])^2 over the frame, all frames at once.

    Expansion: d(tau) = r(0) + e(tau) - 2*c(tau), with c(tau) the linear
    cross-correlation (via FFT) and e(tau) the shifted-window energy.
    """
    num_frames, span = segments.shape
    nfft = 1 << int(span * 2 - 1).bit_length()
    windows = segments[:, :frame_len]
    spec_full = np.fft.rfft(segments, n=nfft, axis=1)
    spec_win = np.fft.rfft(windows, n=nfft, axis=1)
    corr = np.fft.irfft(spec_full * np.conj(spec_win), n=nfft, axis=1)[:, : tau_max + 1]

    sq = segments**2
    csum = np.concatenate([np.zeros((num_frames, 1)), np.cumsum(sq, axis=1)], axis=1)
    taus = np.arange(tau_max + 1)
    energy = csum[:, taus + frame_len] - csum[:, taus]  # sum x[tau:tau+frame]^2
    r0 = energy[:, :1]
    d = r0 + energy - 2.0 * corr
    return np.maximum(d, 0.0)


def _cumulative_mean_normalized(diff: np.ndarray) -> np.ndarray:
    taus = np.arange(1, diff.shape[1])
    running = np.cumsum(diff[:, 1:], axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        cmndf = diff[:, 1:] * taus / running
    cmndf = np.nan_to_num(cmndf, nan=1.0, posinf=1.0)
    return np.concatenate([np.ones((diff.shape[0], 1)), cmndf], axis=1)


def _pick_lag(cmndf: np.ndarray, tau_min: int, tau_max: int):
    """Smallest lag dipping under the absolute threshold, else the global
    minimum; parabolic interpolation refines to fractional lag."""
    search = cmndf[tau_min:tau_max]
    below = np.flatnonzero(search < YIN_THRESHOLD)
    if len(below):
        idx = below[0]
        # walk downhill to the local minimum of this dip
        while idx + 1 < len(search) and search[idx + 1] < search[idx]:
            idx += 1
    else:
        idx = int(np.argmin(search))
    tau = tau_min + idx
    dip = float(search[idx])
    if dip >= 1.0:
        return None, 1.0
    if 0 < tau < len(cmndf) - 1:
        left, mid, right = cmndf[tau - 1], cmndf[tau], cmndf[tau + 1]
        denom = left - 2.0 * mid + right
        if abs(denom) > 1e-12:
            shift = 0.5 * (left - right) / denom
            if abs(shift) < 1.0:
                tau = tau + shift
    return tau, dip
