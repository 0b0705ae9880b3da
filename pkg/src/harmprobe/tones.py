"""Harmonic and jittered-inharmonic tone complexes plus the five probe scenarios.

A tone complex is a sum of equal-amplitude sinusoids. The harmonic case
puts partial n at n*f0; the inharmonic case displaces each partial by a
per-partial random offset bounded by a fraction J of f0, drawn once per
stimulus and held constant over time:

    f_n = n*f0 + J_n*f0,   -J <= J_n <= J

Scenario builders assemble two-source stimuli (alternating bursts,
50%-overlapped bursts, missing-fundamental complexes, synchronous onsets,
speech plus tone) and return both ground-truth sources and their sum.
"""

import enum
from dataclasses import dataclass

import numpy as np

from .core import Waveform, derive_rng, CANONICAL_RATE

DEFAULT_NUM_HARMONICS = 10
DEFAULT_MAX_PARTIAL_HZ = 4000.0  # keeps tone complexes inside the speech band
RAMP_SECONDS = 0.005
PEAK_TARGET = 0.9
DEFAULT_BURST = 0.5
DEFAULT_NUM_BURSTS = 4
MAX_JITTER_DRAWS = 1000


class JitterError(ValueError):
    """Invalid jitter bound or unsatisfiable ordering constraint."""


class NyquistError(ValueError):
    """A requested partial lies at or above the Nyquist frequency."""


@dataclass(frozen=True)
class JitterProfile:
    """Per-partial fractional offsets J_n with their bound J.

    offsets[k] displaces harmonic index k+1; the bound is exact by
    construction: |J_n| <= J for every n, and J = 0 means all J_n = 0.
    """

    bound: float
    offsets: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        offsets = np.asarray(self.offsets, dtype=np.float64)
        if not 0.0 <= self.bound < 1.0:
            raise JitterError(f"jitter bound must be in [0, 1), got {self.bound}")
        if offsets.ndim != 1:
            raise JitterError("offsets must be a 1-D vector, one entry per harmonic")
        if np.any(np.abs(offsets) > self.bound):
            raise JitterError("offsets exceed the stated bound")
        object.__setattr__(self, "offsets", offsets)

    @property
    def num_harmonics(self) -> int:
        return len(self.offsets)

    @staticmethod
    def zero(num_harmonics: int) -> "JitterProfile":
        return JitterProfile(0.0, np.zeros(num_harmonics))


def sample_jitter(bound: float, num_harmonics: int, seed: int) -> JitterProfile:
    """Draw per-partial offsets independently and uniformly from [-J, J].

    Redraws (up to 1000 times) until the jittered partial order
    (n + J_n) is strictly increasing in n, so "inharmonic" is never
    confounded with "reordered". For J < 0.5 the first draw always
    qualifies. J >= 1 is rejected: it would permit non-positive or
    aliased partials.
    """
    if not 0.0 <= bound < 1.0:
        raise JitterError(f"jitter bound must be in [0, 1), got {bound}")
    if num_harmonics < 1:
        raise JitterError("need at least one harmonic")
    rng = derive_rng(seed, "jitter-profile")
    n = np.arange(1, num_harmonics + 1, dtype=np.float64)
    for _ in range(MAX_JITTER_DRAWS):
        # bound * u keeps J = 0 exactly zero and scales one draw across a
        # J sweep, which keeps swept datasets maximally matched.
        offsets = bound * rng.uniform(-1.0, 1.0, size=num_harmonics)
        if np.all(np.diff(n + offsets) > 0):
            return JitterProfile(bound, offsets, seed=seed)
    raise JitterError(
        f"no strictly increasing partial order found in {MAX_JITTER_DRAWS} draws (J={bound})"
    )


@dataclass(frozen=True)
class ToneComplexSpec:
    """Recipe for one tone complex burst.

    explicit_partials, when present, overrides the harmonic series
    entirely (used for sparse complexes); included_harmonics restricts
    the series to a subset of indices (missing-fundamental stimuli).
    """

    f0: float = 110.0
    num_harmonics: int = DEFAULT_NUM_HARMONICS
    amplitudes: tuple | None = None  # per-partial gains, default equal
    jitter: JitterProfile | None = None
    included_harmonics: tuple | None = None
    explicit_partials: tuple | None = None
    onset: float = 0.0
    duration: float = DEFAULT_BURST

    def partial_frequencies(self) -> np.ndarray:
        """Resolve the synthesized partial frequencies in Hz."""
        if self.explicit_partials is not None:
            return np.asarray(self.explicit_partials, dtype=np.float64)
        if self.f0 <= 0:
            raise ValueError(f"f0 must be positive, got {self.f0}")
        indices = self.harmonic_indices()
        offsets = np.zeros(len(indices))
        if self.jitter is not None:
            if self.jitter.num_harmonics < indices.max():
                raise JitterError(
                    f"jitter profile covers {self.jitter.num_harmonics} harmonics, "
                    f"need index {indices.max()}"
                )
            offsets = self.jitter.offsets[indices - 1]
        return (indices + offsets) * self.f0

    def harmonic_indices(self) -> np.ndarray:
        if self.included_harmonics is not None:
            indices = np.asarray(sorted(self.included_harmonics), dtype=np.int64)
            if len(indices) == 0 or indices[0] < 1:
                raise ValueError("included_harmonics must be positive indices")
        else:
            indices = np.arange(1, self.num_harmonics + 1, dtype=np.int64)
        return indices


def default_num_harmonics(f0: float, requested: int = DEFAULT_NUM_HARMONICS) -> int:
    """Default N: `requested` harmonics or up to 4 kHz, whichever is smaller."""
    return max(1, min(requested, int(DEFAULT_MAX_PARTIAL_HZ / f0)))


def synth_tone_complex(spec: ToneComplexSpec, sample_rate: int = CANONICAL_RATE) -> Waveform:
    """Render one tone complex burst.

    The output is zero before `onset`, carries 5 ms raised-cosine ramps at
    both ends of the burst, and is peak-normalized. Partials at or above
    Nyquist raise NyquistError naming the offending index.
    """
    freqs = spec.partial_frequencies()
    nyquist = sample_rate / 2.0
    labels = (
        spec.harmonic_indices()
        if spec.explicit_partials is None
        else np.arange(1, len(freqs) + 1)
    )
    bad = np.flatnonzero((freqs >= nyquist) | (freqs <= 0))
    if len(bad):
        raise NyquistError(
            f"partials outside (0, Nyquist): indices {labels[bad].tolist()} "
            f"at {np.round(freqs[bad], 2).tolist()} Hz"
        )
    if spec.amplitudes is not None:
        amps = np.asarray(spec.amplitudes, dtype=np.float64)
        if len(amps) != len(freqs):
            raise ValueError(f"{len(amps)} amplitudes for {len(freqs)} partials")
    else:
        amps = np.ones(len(freqs))

    burst_len = int(round(spec.duration * sample_rate))
    onset_len = int(round(spec.onset * sample_rate))
    t = np.arange(burst_len) / sample_rate
    burst = np.sin(2.0 * np.pi * np.outer(freqs, t)) * amps[:, None]
    burst = burst.sum(axis=0)
    burst *= _raised_cosine_ramps(burst_len, sample_rate)
    peak = np.max(np.abs(burst))
    if peak > 0:
        burst *= PEAK_TARGET / peak
    samples = np.concatenate([np.zeros(onset_len), burst])
    return Waveform(samples, sample_rate)


def _raised_cosine_ramps(length: int, sample_rate: int, ramp=RAMP_SECONDS) -> np.ndarray:
    env = np.ones(length)
    n = min(int(round(ramp * sample_rate)), length // 2)
    if n > 0:
        shape = 0.5 * (1.0 - np.cos(np.pi * np.arange(n) / n))
        env[:n] = shape
        env[-n:] = shape[::-1]
    return env


class ScenarioKind(enum.Enum):
    """The five two-source probe stimuli, each a fixed documented recipe."""

    ALTERNATING = "alternating"
    SPEECH_TONE = "speech-tone"
    OVERLAP = "overlap"
    MISSING_FUNDAMENTAL = "missing-fundamental"
    SYNCHRONOUS = "synchronous"


@dataclass(frozen=True)
class ScenarioParams:
    """Knobs shared by the scenario recipes; unspecified values take the
    documented defaults for the requested kind."""

    f0_a: float = 110.0
    f0_b: float = 210.0
    jitter_a: float = 0.0
    jitter_b: float = 0.0
    num_harmonics: int = DEFAULT_NUM_HARMONICS
    burst: float = DEFAULT_BURST
    num_bursts: int = DEFAULT_NUM_BURSTS
    gap: float = 0.1  # silence between bursts; keeps sources window-disjoint
    overlap_mode: str = "inharmonic"  # overlap scenario: "inharmonic" | "harmonic"
    missing_side: str = "a"
    missing_keep_from: int = 3  # first retained harmonic index on the test side
    speech: Waveform | None = None
    tone_gain_db: float = 0.0  # speech-tone scenario: tone level vs speech


@dataclass(frozen=True)
class Scenario:
    source_a: Waveform
    source_b: Waveform
    mixture: Waveform
    info: dict


def build_scenario(
    kind: ScenarioKind,
    params: ScenarioParams | None = None,
    seed: int = 0,
    sample_rate: int = CANONICAL_RATE,
) -> Scenario:
    """Build a two-source probe stimulus: ground-truth sources plus sum.

    The mixture always equals source_a + source_b sample-wise; if the sum
    would clip, one scalar rescales all three together.
    """
    params = params or ScenarioParams()
    kind = ScenarioKind(kind)
    if kind is ScenarioKind.ALTERNATING:
        return _alternating(params, seed, sample_rate)
    if kind is ScenarioKind.OVERLAP:
        return _overlap(params, seed, sample_rate)
    if kind is ScenarioKind.MISSING_FUNDAMENTAL:
        return _missing_fundamental(params, seed, sample_rate)
    if kind is ScenarioKind.SYNCHRONOUS:
        return _synchronous(params, seed, sample_rate)
    if kind is ScenarioKind.SPEECH_TONE:
        return _speech_tone(params, seed, sample_rate)
    raise ValueError(f"unknown scenario kind {kind!r}")


def _complex_profile(f0, jitter_bound, num_harmonics, seed, stream):
    n = default_num_harmonics(f0, num_harmonics)
    profile = sample_jitter(jitter_bound, n, derive_rng(seed, stream).integers(2**63))
    return n, profile


def _burst_train(spec_base: ToneComplexSpec, onsets, total_len, sample_rate):
    """Sum one complex at several onsets into a fixed-length buffer."""
    out = np.zeros(total_len)
    for onset in onsets:
        spec = ToneComplexSpec(
            f0=spec_base.f0,
            num_harmonics=spec_base.num_harmonics,
            amplitudes=spec_base.amplitudes,
            jitter=spec_base.jitter,
            included_harmonics=spec_base.included_harmonics,
            explicit_partials=spec_base.explicit_partials,
            onset=onset,
            duration=spec_base.duration,
        )
        wav = synth_tone_complex(spec, sample_rate)
        n = min(len(wav), total_len)  # independent roundings can differ by 1
        out[:n] += wav.samples[:n]
    return Waveform(out, sample_rate)


def _finish(a: Waveform, b: Waveform, info: dict) -> Scenario:
    mixture = a.samples + b.samples
    peak = np.max(np.abs(mixture)) if len(mixture) else 0.0
    if peak > 0.99:
        scale = 0.99 / peak
        a = Waveform(a.samples * scale, a.sample_rate)
        b = Waveform(b.samples * scale, b.sample_rate)
        info = dict(info, renormalized_by=scale)
    mixture = Waveform(a.samples + b.samples, a.sample_rate)
    return Scenario(a, b, mixture, info)


def _alternating_layout(params, sample_rate):
    period = 2.0 * (params.burst + params.gap)
    onsets_a = [k * period for k in range(params.num_bursts)]
    onsets_b = [params.burst + params.gap + k * period for k in range(params.num_bursts)]
    total = int(round((onsets_b[-1] + params.burst + params.gap) * sample_rate))
    return onsets_a, onsets_b, total


def _alternating(params, seed, sample_rate, included_a=None, included_b=None, tag="alternating"):
    na, prof_a = _complex_profile(params.f0_a, params.jitter_a, params.num_harmonics, seed, "complex-a")
    nb, prof_b = _complex_profile(params.f0_b, params.jitter_b, params.num_harmonics, seed, "complex-b")
    spec_a = ToneComplexSpec(
        f0=params.f0_a, num_harmonics=na, jitter=prof_a,
        included_harmonics=included_a, duration=params.burst,
    )
    spec_b = ToneComplexSpec(
        f0=params.f0_b, num_harmonics=nb, jitter=prof_b,
        included_harmonics=included_b, duration=params.burst,
    )
    onsets_a, onsets_b, total = _alternating_layout(params, sample_rate)
    a = _burst_train(spec_a, onsets_a, total, sample_rate)
    b = _burst_train(spec_b, onsets_b, total, sample_rate)
    info = {
        "kind": tag,
        "f0": [params.f0_a, params.f0_b],
        "jitter": [params.jitter_a, params.jitter_b],
        "offsets_a": prof_a.offsets.tolist(),
        "offsets_b": prof_b.offsets.tolist(),
        "partials_a": spec_a.partial_frequencies().tolist(),
        "partials_b": spec_b.partial_frequencies().tolist(),
        "onsets_a": onsets_a,
        "onsets_b": onsets_b,
        "burst": params.burst,
        "seed": seed,
    }
    return _finish(a, b, info)


def _missing_fundamental(params, seed, sample_rate):
    def missing_indices(f0):
        n = default_num_harmonics(f0, params.num_harmonics)
        keep = tuple(range(params.missing_keep_from, n + 1))
        if not keep:
            raise ValueError(f"no harmonics left after dropping 1..{params.missing_keep_from - 1}")
        return keep

    included_a = missing_indices(params.f0_a) if params.missing_side == "a" else None
    included_b = missing_indices(params.f0_b) if params.missing_side == "b" else None
    scenario = _alternating(
        params, seed, sample_rate,
        included_a=included_a, included_b=included_b, tag="missing-fundamental",
    )
    scenario.info["missing_side"] = params.missing_side
    scenario.info["included_harmonics"] = included_a if params.missing_side == "a" else included_b
    return scenario


def _overlap(params, seed, sample_rate):
    """Alternating bursts with 50% temporal overlap.

    Inharmonic mode uses the sparse complexes {200, 600} and
    {100, 300, 500} Hz whose union during overlap is harmonic at 100 Hz;
    harmonic mode is the F0 = 100/190 Hz control.
    """
    if params.overlap_mode == "inharmonic":
        spec_a = ToneComplexSpec(explicit_partials=(200.0, 600.0), duration=params.burst)
        spec_b = ToneComplexSpec(explicit_partials=(100.0, 300.0, 500.0), duration=params.burst)
        f0s = None
    elif params.overlap_mode == "harmonic":
        f0_a = 100.0 if params.f0_a == 110.0 else params.f0_a  # recipe defaults
        f0_b = 190.0 if params.f0_b == 210.0 else params.f0_b
        na = default_num_harmonics(f0_a, params.num_harmonics)
        nb = default_num_harmonics(f0_b, params.num_harmonics)
        spec_a = ToneComplexSpec(f0=f0_a, num_harmonics=na, duration=params.burst)
        spec_b = ToneComplexSpec(f0=f0_b, num_harmonics=nb, duration=params.burst)
        f0s = [f0_a, f0_b]
    else:
        raise ValueError(f"overlap_mode must be 'inharmonic' or 'harmonic', got {params.overlap_mode!r}")

    period = 1.5 * params.burst
    onsets_a = [k * period for k in range(params.num_bursts)]
    onsets_b = [0.5 * params.burst + k * period for k in range(params.num_bursts)]
    total = int(round((onsets_b[-1] + params.burst) * sample_rate))
    a = _burst_train(spec_a, onsets_a, total, sample_rate)
    b = _burst_train(spec_b, onsets_b, total, sample_rate)
    overlaps = [
        (start_b, start_b + 0.5 * params.burst)
        for start_b in onsets_b
        for start_a in onsets_a
        if abs(start_b - (start_a + 0.5 * params.burst)) < 1e-9
    ]
    info = {
        "kind": "overlap",
        "mode": params.overlap_mode,
        "f0": f0s,
        "partials_a": spec_a.partial_frequencies().tolist(),
        "partials_b": spec_b.partial_frequencies().tolist(),
        "onsets_a": onsets_a,
        "onsets_b": onsets_b,
        "overlap_intervals": overlaps,
        "burst": params.burst,
        "seed": seed,
    }
    return _finish(a, b, info)


def _synchronous(params, seed, sample_rate):
    na, prof_a = _complex_profile(params.f0_a, params.jitter_a, params.num_harmonics, seed, "complex-a")
    nb, prof_b = _complex_profile(params.f0_b, params.jitter_b, params.num_harmonics, seed, "complex-b")
    spec_a = ToneComplexSpec(f0=params.f0_a, num_harmonics=na, jitter=prof_a, duration=params.burst)
    spec_b = ToneComplexSpec(f0=params.f0_b, num_harmonics=nb, jitter=prof_b, duration=params.burst)
    period = params.burst + params.gap
    onsets = [k * period for k in range(params.num_bursts)]
    total = int(round((onsets[-1] + params.burst) * sample_rate))
    a = _burst_train(spec_a, onsets, total, sample_rate)
    b = _burst_train(spec_b, onsets, total, sample_rate)
    info = {
        "kind": "synchronous",
        "f0": [params.f0_a, params.f0_b],
        "jitter": [params.jitter_a, params.jitter_b],
        "partials_a": spec_a.partial_frequencies().tolist(),
        "partials_b": spec_b.partial_frequencies().tolist(),
        "onsets": onsets,
        "burst": params.burst,
        "seed": seed,
    }
    return _finish(a, b, info)


def _speech_tone(params, seed, sample_rate):
    if params.speech is None:
        raise ValueError("speech-tone scenario requires a speech Waveform in params.speech")
    speech = params.speech
    if speech.sample_rate != sample_rate:
        raise ValueError(
            f"speech sample rate {speech.sample_rate} != scenario rate {sample_rate}"
        )
    f0_tone = params.f0_b
    n, profile = _complex_profile(f0_tone, params.jitter_b, params.num_harmonics, seed, "tone")
    spec = ToneComplexSpec(f0=f0_tone, num_harmonics=n, jitter=profile, duration=params.burst)
    # tone bursts every other burst slot, cropped to the speech extent
    period = 2.0 * params.burst
    onsets = []
    t = 0.0
    while t + params.burst <= speech.duration:
        onsets.append(t)
        t += period
    if not onsets:
        raise ValueError("speech shorter than one tone burst")
    tone = _burst_train(spec, onsets, len(speech), sample_rate)
    gain = 10.0 ** (params.tone_gain_db / 20.0)
    rms_speech = speech.rms()
    rms_tone = tone.rms()
    if rms_tone > 0 and rms_speech > 0:
        tone = Waveform(tone.samples * (gain * rms_speech / rms_tone), sample_rate)
    info = {
        "kind": "speech-tone",
        "tone_f0": f0_tone,
        "jitter": [0.0, params.jitter_b],
        "offsets_tone": profile.offsets.tolist(),
        "partials_tone": spec.partial_frequencies().tolist(),
        "tone_onsets": onsets,
        "tone_gain_db": params.tone_gain_db,
        "burst": params.burst,
        "seed": seed,
    }
    return _finish(speech, tone, info)
