"""Synthetic speech-proxy utterances and toy corpora.

These are not speech, but they exercise the same machinery: voiced
segments with a wandering F0 and formant-shaped harmonic amplitudes,
separated by silence or fricative-like noise bursts. Useful for tests,
for the acceptance suite, and for running sweeps without access to a
licensed speech corpus.
"""

import pathlib

import numpy as np

from .core import CANONICAL_RATE, Waveform, derive_rng, write_wav

FORMANT_BANKS = [
    (730.0, 1090.0, 2440.0),  # open vowel
    (270.0, 2290.0, 3010.0),  # close front
    (300.0, 870.0, 2240.0),  # close back
    (530.0, 1840.0, 2480.0),  # mid front
]
FORMANT_BANDWIDTH = 120.0


def synthetic_vowel(
    f0: float,
    duration: float = 1.0,
    sample_rate: int = CANONICAL_RATE,
    num_harmonics: int = 30,
    formants=FORMANT_BANKS[0],
    seed: int = 0,
    noise_rms: float = 0.0,
) -> Waveform:
    """Steady vowel: harmonic series with formant-shaped amplitudes.

    The F0 is exactly constant, which makes these the reference inputs
    for tracker accuracy and frequency-law checks.
    """
    rng = derive_rng(seed, "vowel")
    n = np.arange(1, num_harmonics + 1)
    freqs = n * f0
    keep = freqs < 0.45 * sample_rate
    freqs = freqs[keep]
    amps = _formant_gains(freqs, formants) / n[keep] ** 0.5
    phases = rng.uniform(0, 2 * np.pi, size=len(freqs))
    t = np.arange(int(round(duration * sample_rate))) / sample_rate
    out = np.sum(
        amps[:, None] * np.cos(2 * np.pi * np.outer(freqs, t) + phases[:, None]), axis=0
    )
    out *= _edge_ramps(len(out), sample_rate)
    out *= 0.5 / np.max(np.abs(out))
    if noise_rms > 0:
        out = out + rng.normal(0.0, noise_rms * np.sqrt(np.mean(out**2)), size=len(out))
    return Waveform(out, sample_rate)


def speech_like_utterance(
    seed: int,
    base_f0: float | None = None,
    num_syllables: int = 3,
    sample_rate: int = CANONICAL_RATE,
) -> Waveform:
    """Multi-syllable utterance: gliding-F0 voiced stretches interleaved
    with fricative-like noise and silence."""
    rng = derive_rng(seed, "utterance")
    if base_f0 is None:
        base_f0 = float(rng.uniform(95.0, 230.0))
    pieces = []
    for _ in range(num_syllables):
        voiced_dur = float(rng.uniform(0.2, 0.4))
        formants = FORMANT_BANKS[int(rng.integers(len(FORMANT_BANKS)))]
        pieces.append(
            _gliding_vowel(
                base_f0 * float(rng.uniform(0.9, 1.1)),
                base_f0 * float(rng.uniform(0.9, 1.1)),
                voiced_dur,
                sample_rate,
                formants,
                rng,
            )
        )
        kind = rng.integers(3)
        gap_dur = float(rng.uniform(0.04, 0.12))
        gap_len = int(gap_dur * sample_rate)
        if kind == 0:
            pieces.append(np.zeros(gap_len))
        else:
            pieces.append(_fricative(gap_len, sample_rate, rng))
    out = np.concatenate(pieces)
    out *= 0.5 / np.max(np.abs(out))
    return Waveform(out, sample_rate)


def make_tone_proxy_corpus(
    out_dir,
    f0s=(110.0, 210.0),
    utterances_per_speaker: int = 2,
    duration: float = 1.2,
    seed: int = 0,
    sample_rate: int = CANONICAL_RATE,
) -> list:
    """Corpus of steady tone complexes standing in for speakers.

    One 'speaker' per F0. These drive sweep demonstrations where the
    separator under test is pitch-based and the stimuli must stay
    maximally controlled.
    """
    from .tones import ToneComplexSpec, synth_tone_complex, default_num_harmonics

    out_dir = pathlib.Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = derive_rng(seed, "tone-proxy")
    paths = []
    for s, f0 in enumerate(f0s):
        n = default_num_harmonics(f0)
        for u in range(utterances_per_speaker):
            dur = duration * float(rng.uniform(0.9, 1.1))
            wav = synth_tone_complex(
                ToneComplexSpec(f0=float(f0), num_harmonics=n, duration=dur), sample_rate
            )
            path = out_dir / f"spk{s}_utt{u}.wav"
            write_wav(path, wav)
            paths.append(path)
    return paths


def make_toy_corpus(
    out_dir,
    num_speakers: int = 4,
    utterances_per_speaker: int = 5,
    seed: int = 0,
    sample_rate: int = CANONICAL_RATE,
) -> list:
    """Write `spk<i>_utt<j>.wav` files; speakers differ by base F0 range."""
    out_dir = pathlib.Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = derive_rng(seed, "toy-corpus")
    # speakers sit in distinct F0 bands so mixtures pair unlike pitches
    bands = np.linspace(95.0, 230.0, num_speakers + 1)
    paths = []
    for s in range(num_speakers):
        base_f0 = float(rng.uniform(bands[s], bands[s + 1]))
        for u in range(utterances_per_speaker):
            utt_seed = int(rng.integers(2**63))
            wav = speech_like_utterance(utt_seed, base_f0=base_f0, sample_rate=sample_rate)
            path = out_dir / f"spk{s}_utt{u}.wav"
            write_wav(path, wav)
            paths.append(path)
    return paths


def _formant_gains(freqs: np.ndarray, formants) -> np.ndarray:
    gains = np.zeros_like(freqs)
    for fc in formants:
        gains += 1.0 / (1.0 + ((freqs - fc) / FORMANT_BANDWIDTH) ** 2)
    return gains + 0.05


def _gliding_vowel(f0_start, f0_end, duration, sample_rate, formants, rng):
    length = int(round(duration * sample_rate))
    t = np.arange(length) / sample_rate
    vibrato_hz = float(rng.uniform(4.0, 7.0))
    vibrato_depth = float(rng.uniform(0.01, 0.03))
    f0_t = np.linspace(f0_start, f0_end, length) * (
        1.0 + vibrato_depth * np.sin(2 * np.pi * vibrato_hz * t + rng.uniform(0, 2 * np.pi))
    )
    phase0 = 2.0 * np.pi * np.cumsum(f0_t) / sample_rate
    num_harmonics = int(0.45 * sample_rate / f0_t.max())
    out = np.zeros(length)
    n = np.arange(1, num_harmonics + 1)
    gains = _formant_gains(n * (f0_start + f0_end) / 2.0, formants) / n**0.5
    for k, g in zip(n, gains):
        out += g * np.cos(k * phase0 + float(rng.uniform(0, 2 * np.pi)))
    out *= _edge_ramps(length, sample_rate)
    return out / np.max(np.abs(out))


def _fricative(length, sample_rate, rng):
    noise = rng.normal(0.0, 1.0, size=length + 64)
    # band-limited noise burst; aperiodic enough to stay unvoiced
    kernel = np.sinc(np.arange(-32, 32) * 0.5) * np.hanning(64)
    shaped = np.convolve(noise, kernel, mode="same")[:length]
    shaped -= np.mean(shaped)
    shaped *= _edge_ramps(length, sample_rate)
    peak = np.max(np.abs(shaped))
    return 0.15 * shaped / peak if peak > 0 else shaped


def _edge_ramps(length, sample_rate, ramp=0.005):
    env = np.ones(length)
    n = min(int(ramp * sample_rate), length // 2)
    if n > 0:
        shape = 0.5 * (1 - np.cos(np.pi * np.arange(n) / n))
        env[:n] = shape
        env[-n:] = shape[::-1]
    return env
