"""Reference separators and the external-process separator protocol.

OracleIRM is the mask-based upper bound: ideal ratio masks computed from
the ground-truth sources, applied to the mixture STFT. HarmonicComb is a
transparent pitch-tracking separator: per frame it finds up to two F0
candidates by harmonic-sum salience, strings them into two tracks by F0
continuity, and masks narrow bands around each track's harmonics. It
embodies exactly the "track the pitches, collect their harmonics"
strategy, so its failure under frequency jitter is the phenomenon the
toolkit probes.

External separators are separate processes invoked per mixture with the
file contract: `CMD {input_wav} {output_dir}` must write
`<basename>_src1.wav` and `<basename>_src2.wav` (same rate and length as
the input) and exit 0.
"""

import logging
import pathlib
import shlex
import subprocess
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import Waveform, read_wav, write_wav, stft_complex, istft_complex
from .mixtures import MixtureManifest

log = logging.getLogger(__name__)

IRM_WINDOW = 0.032
IRM_HOP = 0.008
ADDITIVITY_RMS_TOL = 1e-6


class AdditivityError(ValueError):
    """References do not sum to the mixture."""


@dataclass(frozen=True)
class HarmonicCombConfig:
    """Knobs for the comb separator.

    The mask half-width is max(bandwidth_frac * harmonic_freq, one
    analysis mainlobe halfwidth); the long default window keeps that
    floor well under the jitter offsets being probed.
    """

    f0_min: float = 60.0
    f0_max: float = 400.0
    f0_step: float = 1.0
    num_harmonics: int = 12
    mask_bandwidth_frac: float = 0.03
    window: float = 0.256
    hop: float = 0.016
    activity_rms_frac: float = 0.02  # frame gate vs the loudest frame
    capture_floor: float = 0.15  # min fraction of frame magnitude a comb must claim
    second_pitch_rel: float = 0.2  # second salience vs first to accept two pitches
    min_pitch_separation: float = 0.2  # min relative gap between the two pitches
    max_jump_hz: float = 5.0  # continuity tolerance per frame for track matching


@dataclass(frozen=True)
class SeparatorSpec:
    kind: str  # "oracle-irm" | "harmonic-comb" | "external"
    external_command: str | None = None
    comb_config: HarmonicCombConfig = field(default_factory=HarmonicCombConfig)

    def __post_init__(self):
        if self.kind not in ("oracle-irm", "harmonic-comb", "external"):
            raise ValueError(f"unknown separator kind {self.kind!r}")
        if self.kind == "external":
            cmd = self.external_command or ""
            if "{input_wav}" not in cmd or "{output_dir}" not in cmd:
                raise ValueError(
                    "external command template must contain {input_wav} and {output_dir}"
                )


def oracle_irm(
    mixture: Waveform,
    refs,
    window: float = IRM_WINDOW,
    hop: float = IRM_HOP,
    additivity_tol: float = ADDITIVITY_RMS_TOL,
):
    """Ideal-ratio-mask oracle: |A|^2 / (|A|^2 + |B|^2) masks on the mixture.

    Requires refs to sum to the mixture (RMS tolerance 1e-6 for float
    pipelines; pass a looser additivity_tol for signals that round-tripped
    through 16-bit PCM). The two estimates sum back to the mixture exactly
    because the masks sum to 1 in every bin.
    """
    ref_a, ref_b = refs
    if len(ref_a) != len(mixture) or len(ref_b) != len(mixture):
        raise AdditivityError("references and mixture must share one length")
    gap = mixture.samples - ref_a.samples - ref_b.samples
    if np.sqrt(np.mean(gap**2)) > additivity_tol:
        raise AdditivityError(
            f"refs do not sum to the mixture (residual RMS {np.sqrt(np.mean(gap ** 2)):.2e})"
        )
    fs = mixture.sample_rate
    pad = int(round(window * fs))
    length = len(mixture)

    def padded_stft(wav):
        x = np.concatenate([np.zeros(pad), wav.samples, np.zeros(pad)])
        return stft_complex(x, fs, window, hop)

    spec_mix, win, hop_samps, nfft = padded_stft(mixture)
    spec_a, _, _, _ = padded_stft(ref_a)
    spec_b, _, _, _ = padded_stft(ref_b)
    power_a = np.abs(spec_a) ** 2
    power_b = np.abs(spec_b) ** 2
    denom = power_a + power_b
    mask_a = np.where(denom > 0, power_a / np.where(denom > 0, denom, 1.0), 0.5)

    est_a = istft_complex(mask_a * spec_mix, win, hop_samps, nfft, length + 2 * pad)
    est_b = istft_complex((1.0 - mask_a) * spec_mix, win, hop_samps, nfft, length + 2 * pad)
    return (
        Waveform(est_a[pad : pad + length], fs),
        Waveform(est_b[pad : pad + length], fs),
    )


def harmonic_comb_separate(
    mixture: Waveform, config: HarmonicCombConfig | None = None
):
    """Two-pitch comb separation of a mono mixture.

    Deterministic for a fixed config. Frames with one detected pitch give
    all comb-masked energy to the continuing track; frames with no pitch
    split their energy equally.
    """
    config = config or HarmonicCombConfig()
    tracks, spectra, win, hop_samps, nfft, pad = _track_two_pitches(mixture, config)
    fs = mixture.sample_rate
    freqs = np.arange(nfft // 2 + 1) * (fs / nfft)
    mainlobe = 2.0 * fs / win

    num_frames = spectra.shape[0]
    masks = np.zeros((2, num_frames, len(freqs)))
    for t in range(num_frames):
        for s in range(2):
            f0 = tracks[s, t]
            if not f0 > 0:
                continue
            masks[s, t] = _comb_band_mask(f0, freqs, fs, config, mainlobe)
    total = masks.sum(axis=0)
    share = np.where(total > 0, masks / np.where(total > 0, total, 1.0), 0.5)

    length = len(mixture)
    est = [
        istft_complex(share[s] * spectra, win, hop_samps, nfft, length + 2 * pad)[
            pad : pad + length
        ]
        for s in range(2)
    ]
    return Waveform(est[0], fs), Waveform(est[1], fs)


def comb_pitch_tracks(mixture: Waveform, config: HarmonicCombConfig | None = None):
    """The comb separator's two F0 tracks (Hz per frame, 0 = inactive) and
    the frame times; exposed for figures and tests."""
    config = config or HarmonicCombConfig()
    tracks, _, win, hop_samps, _, pad = _track_two_pitches(mixture, config)
    fs = mixture.sample_rate
    times = (np.arange(tracks.shape[1]) * hop_samps + win / 2.0 - pad) / fs
    return tracks, times


def _track_two_pitches(mixture: Waveform, config: HarmonicCombConfig):
    fs = mixture.sample_rate
    pad = int(round(config.window * fs))
    x = np.concatenate([np.zeros(pad), mixture.samples, np.zeros(pad)])
    nfft_min = int(round(config.window * fs)) * 4  # fine bins for comb sampling
    nfft = 1 << (nfft_min - 1).bit_length()
    spectra, win, hop_samps, nfft = stft_complex(x, fs, config.window, config.hop, nfft)
    mags = np.abs(spectra)
    freqs = np.arange(nfft // 2 + 1) * (fs / nfft)
    mainlobe = 2.0 * fs / win

    grid = np.arange(config.f0_min, config.f0_max + config.f0_step / 2, config.f0_step)
    harmonics = np.arange(1, config.num_harmonics + 1)
    comb_freqs = np.outer(grid, harmonics)  # (num_f0, num_harmonics)
    comb_weights = np.where(comb_freqs < fs / 2.0, 1.0 / harmonics[None, :], 0.0)

    frame_rms = np.sqrt(np.mean(np.abs(spectra) ** 2, axis=1))
    gate = config.activity_rms_frac * frame_rms.max() if frame_rms.size else 0.0

    num_frames = mags.shape[0]
    tracks = np.zeros((2, num_frames))
    state = [{"f0": 0.0, "frame": -1}, {"f0": 0.0, "frame": -1}]

    for t in range(num_frames):
        detections = []
        if frame_rms[t] > gate:
            detections = _detect_pitches(
                mags[t], freqs, grid, comb_freqs, comb_weights, fs, config, mainlobe
            )
        assignment = _assign_to_tracks(detections, state, t, config.max_jump_hz)
        for slot, f0 in enumerate(assignment):
            tracks[slot, t] = f0
            if f0 > 0:
                state[slot] = {"f0": f0, "frame": t}
    return tracks, spectra, win, hop_samps, nfft, pad


def _detect_pitches(mag, freqs, grid, comb_freqs, comb_weights, fs, config, mainlobe):
    """Up to two (f0, salience) pairs per frame by greedy exclusive
    harmonic-sum salience."""
    total_mag = mag.sum()
    if total_mag <= 0:
        return []
    detections = []
    residual = mag
    first_salience = None
    for _ in range(2):
        sampled = np.interp(comb_freqs.ravel(), freqs, residual).reshape(comb_freqs.shape)
        salience = (sampled * comb_weights).sum(axis=1)
        best = int(np.argmax(salience))
        f0 = _parabolic_refine(grid, salience, best)
        band = _comb_band_mask(f0, freqs, fs, config, mainlobe)
        captured = (mag * band).sum()
        if first_salience is None:
            if captured < config.capture_floor * total_mag:
                break
            first_salience = salience[best]
        else:
            res_total = residual.sum()
            res_captured = (residual * band).sum()
            f0_first = detections[0][0]
            if (
                salience[best] < config.second_pitch_rel * first_salience
                or res_total <= 0
                or res_captured < config.capture_floor * res_total
                # window-edge smearing fakes a near-duplicate pitch
                or abs(f0 - f0_first) < config.min_pitch_separation * f0_first
            ):
                break
        detections.append((f0, float(salience[best])))
        residual = residual * (1.0 - band)
    return detections


def _comb_band_mask(f0, freqs, fs, config, mainlobe):
    """Union of bands around the harmonics of f0.

    Half-width is max(bandwidth_frac * harmonic_freq, one mainlobe
    halfwidth); edges roll off linearly over one bin.
    """
    mask = np.zeros(len(freqs))
    edge = freqs[1] - freqs[0] if len(freqs) > 1 else 1.0
    n_max = int((fs / 2.0) / f0)
    for n in range(1, min(config.num_harmonics, n_max) + 1):
        center = n * f0
        half = max(config.mask_bandwidth_frac * center, mainlobe / 2.0)
        band = np.clip((half - np.abs(freqs - center)) / edge + 1.0, 0.0, 1.0)
        mask = np.maximum(mask, band)
    return mask


def _parabolic_refine(grid, salience, idx):
    if 0 < idx < len(grid) - 1:
        left, mid, right = salience[idx - 1], salience[idx], salience[idx + 1]
        denom = left - 2.0 * mid + right
        if abs(denom) > 1e-12:
            shift = 0.5 * (left - right) / denom
            if abs(shift) <= 1.0:
                return float(grid[idx] + shift * (grid[1] - grid[0]))
    return float(grid[idx])


NEW_TRACK_COST = 50.0
IMPLAUSIBLE_JUMP_COST = 1000.0


def _assign_to_tracks(detections, state, t, max_jump):
    """Match up to two detected pitches to the two track slots by F0
    continuity.

    Continuing a track costs the F0 distance while the jump stays within
    max_jump per elapsed frame; implausible jumps cost more than opening
    the other (idle) slot, so a newly appearing source gets its own track
    instead of stealing an established one.
    """
    slots = [0.0, 0.0]
    if not detections:
        return slots
    candidates = [f0 for f0, _ in detections[:2]]

    def cost(assign):
        c = 0.0
        for slot, f0 in assign:
            if f0 is None:
                continue
            prev = state[slot]["f0"]
            if prev > 0:
                gap = max(1, t - state[slot]["frame"])
                allowed = min(max_jump * gap, 120.0)
                dist = abs(f0 - prev)
                c += dist if dist <= allowed else IMPLAUSIBLE_JUMP_COST + dist
            else:
                c += NEW_TRACK_COST
        return c

    if len(candidates) == 1:
        options = [[(0, candidates[0]), (1, None)], [(1, candidates[0]), (0, None)]]
    else:
        options = [
            [(0, candidates[0]), (1, candidates[1])],
            [(0, candidates[1]), (1, candidates[0])],
        ]
    best = min(options, key=cost)
    for slot, f0 in best:
        if f0 is not None:
            slots[slot] = f0
    return slots


@dataclass
class ExternalRunResult:
    succeeded: list
    failures: dict  # id -> reason

    @property
    def ok(self) -> bool:
        return not self.failures


def run_external(
    spec: SeparatorSpec,
    manifest: MixtureManifest,
    manifest_root,
    out_dir,
    jobs: int = 2,
    timeout: float = 600.0,
) -> ExternalRunResult:
    """Invoke an external separator per mixture with bounded parallelism.

    One failing record never aborts the batch; failures are collected per
    record with their reason. Outputs are validated for presence, sample
    rate, and length.
    """
    if spec.kind != "external":
        raise ValueError("run_external requires an external separator spec")
    out_dir = pathlib.Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    root = pathlib.Path(manifest_root)
    template = shlex.split(spec.external_command)

    def run_one(rec):
        input_wav = root / rec.mixture_path
        argv = [
            token.replace("{input_wav}", str(input_wav)).replace("{output_dir}", str(out_dir))
            for token in template
        ]
        try:
            proc = subprocess.run(argv, capture_output=True, text=True, timeout=timeout)
        except Exception as exc:
            return rec.id, f"invocation failed: {exc}"
        if proc.returncode != 0:
            detail = proc.stderr.strip().splitlines()[-1:] or ["(no stderr)"]
            return rec.id, f"exit code {proc.returncode}: {detail[0]}"
        expected_rate = None
        try:
            expected = read_wav(input_wav)
            expected_rate = expected.sample_rate
        except Exception as exc:
            return rec.id, f"unreadable input: {exc}"
        stem = input_wav.stem
        for suffix in ("_src1.wav", "_src2.wav"):
            est_path = out_dir / f"{stem}{suffix}"
            if not est_path.exists():
                return rec.id, f"missing output {est_path.name}"
            try:
                est = read_wav(est_path)
            except Exception as exc:
                return rec.id, f"malformed output {est_path.name}: {exc}"
            if est.sample_rate != expected_rate:
                return rec.id, (
                    f"output rate {est.sample_rate} != input rate {expected_rate}"
                )
            if len(est) != len(expected):
                return rec.id, f"output length {len(est)} != input length {len(expected)}"
        return rec.id, None

    results = []
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_one, manifest.records))
    else:
        results = [run_one(rec) for rec in manifest.records]

    succeeded = [mix_id for mix_id, err in results if err is None]
    failures = {mix_id: err for mix_id, err in results if err is not None}
    for mix_id, err in failures.items():
        log.warning("external separator failed on %s: %s", mix_id, err)
    return ExternalRunResult(succeeded, failures)


def separate_manifest(
    kind: str,
    manifest: MixtureManifest,
    manifest_root,
    out_dir,
    comb_config: HarmonicCombConfig | None = None,
    jobs: int = 1,
) -> dict:
    """Run a built-in separator over every manifest record, writing the
    external-contract estimate files.

    Returns {record id: failure reason} for records that could not be
    separated; one bad record never aborts the batch.
    """
    if kind not in ("oracle-irm", "harmonic-comb"):
        raise ValueError(f"unknown built-in separator {kind!r}")
    out_dir = pathlib.Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    root = pathlib.Path(manifest_root)
    rate = manifest.metadata.get("sample_rate")

    def run_one(rec):
        try:
            mixture = read_wav(root / rec.mixture_path, target_rate=rate)
            if kind == "oracle-irm":
                refs = (
                    read_wav(root / rec.ref_a_path, target_rate=rate),
                    read_wav(root / rec.ref_b_path, target_rate=rate),
                )
                # 16-bit quantization leaves ~1.5e-5 RMS additivity residual
                est_a, est_b = oracle_irm(mixture, refs, additivity_tol=1e-4)
            else:
                est_a, est_b = harmonic_comb_separate(mixture, comb_config)
            write_wav(out_dir / f"{rec.id}_src1.wav", est_a)
            write_wav(out_dir / f"{rec.id}_src2.wav", est_b)
        except Exception as exc:
            log.warning("%s failed on %s: %s", kind, rec.id, exc)
            return rec.id, str(exc)
        return rec.id, None

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_one, manifest.records))
    else:
        results = [run_one(rec) for rec in manifest.records]
    return {mix_id: err for mix_id, err in results if err is not None}
