import numpy as np
import pytest

from harmprobe.core import Waveform
from harmprobe.toys import make_toy_corpus, synthetic_vowel


@pytest.fixture(scope="session")
def toy_corpus(tmp_path_factory):
    """Small 3-speaker corpus shared by dataset/separator tests."""
    root = tmp_path_factory.mktemp("corpus")
    make_toy_corpus(root, num_speakers=3, utterances_per_speaker=3, seed=1)
    return root


@pytest.fixture(scope="session")
def vowel_120():
    return synthetic_vowel(120.0, duration=1.0, seed=3)


@pytest.fixture()
def white_noise():
    rng = np.random.default_rng(0)
    return Waveform(rng.normal(0.0, 0.1, size=16000), 16000)


def measured_inst_freq(x: np.ndarray, fs: int, f_ref: float, smooth: float = 0.02):
    """Instantaneous frequency by quadrature demodulation at f_ref and
    phase differentiation; double smoothing suppresses the image term."""
    n = np.arange(len(x))
    z = x * np.exp(-2j * np.pi * f_ref * n / fs)
    k = max(8, int(smooth * fs))
    kern = np.hanning(k)
    kern /= kern.sum()
    zf = np.convolve(np.convolve(z, kern, mode="same"), kern, mode="same")
    psi = np.unwrap(np.angle(zf))
    return f_ref + np.gradient(psi) * fs / (2.0 * np.pi)


def spectral_peak_near(x: np.ndarray, fs: int, center: float, halfwidth: float) -> float:
    """Frequency of the strongest spectral peak within center +- halfwidth,
    measured on one long Hann window with parabolic interpolation.

    Independent of the package STFT: direct rfft on the raw samples.
    """
    window = np.hanning(len(x))
    nfft = 1 << int(len(x) * 4 - 1).bit_length()
    mag = np.abs(np.fft.rfft(x * window, n=nfft))
    freqs = np.fft.rfftfreq(nfft, 1.0 / fs)
    sel = (freqs >= center - halfwidth) & (freqs <= center + halfwidth)
    idx = np.flatnonzero(sel)
    if len(idx) == 0:
        return float("nan")
    best = idx[np.argmax(mag[idx])]
    if 0 < best < len(mag) - 1 and mag[best] > 0:
        lm, mm, rm = mag[best - 1], mag[best], mag[best + 1]
        denom = lm - 2 * mm + rm
        if abs(denom) > 1e-12:
            shift = 0.5 * (lm - rm) / denom
            return float(freqs[best] + shift * (freqs[1] - freqs[0]))
    return float(freqs[best])


def harmonic_deviations(wav: Waveform, f0: float, harmonics) -> np.ndarray:
    """Peak-tracking oracle: measured |peak - n*f0| per harmonic, using the
    steady middle half of the signal."""
    fs = wav.sample_rate
    mid = wav.samples[len(wav) // 4 : 3 * len(wav) // 4]
    devs = []
    for n in harmonics:
        peak = spectral_peak_near(mid, fs, n * f0, 0.45 * f0)
        devs.append(abs(peak - n * f0))
    return np.asarray(devs)
