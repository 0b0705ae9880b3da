"""Core signal types, STFT analysis, WAV I/O, and deterministic RNG.

Everything downstream of this module works on mono float64 buffers at a
canonical 16 kHz rate. Inputs at other rates are resampled on ingest; on
disk we write 16-bit PCM. All randomness flows through `derive_rng` so a
single root seed reproduces any pipeline bit-exactly.
"""

import hashlib
import math
import wave as _wave
from dataclasses import dataclass

import numpy as np
import scipy.io.wavfile
import scipy.signal

CANONICAL_RATE = 16000
DEFAULT_WINDOW = 0.032  # seconds; resolves harmonics of F0 >= 60 Hz
DEFAULT_HOP = 0.008

_PCM16_FULL_SCALE = 32767.0


class SignalError(ValueError):
    """Invalid signal content or parameters."""


class WavFormatError(SignalError):
    """Unreadable, empty, or unsupported WAV file."""


@dataclass(frozen=True)
class Waveform:
    """Mono sample buffer plus its sample rate.

    Samples are dimensionless amplitudes, nominally in [-1, 1]; synthesis
    paths guarantee peak |amplitude| <= 1.0 after final normalization.
    """

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise SignalError(f"expected mono 1-D samples, got shape {samples.shape}")
        if self.sample_rate <= 0:
            raise SignalError(f"sample_rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self):
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    def peak(self) -> float:
        return float(np.max(np.abs(self.samples))) if len(self.samples) else 0.0

    def rms(self) -> float:
        return float(np.sqrt(np.mean(self.samples**2))) if len(self.samples) else 0.0


@dataclass(frozen=True)
class Spectrogram:
    """Time x frequency grid of non-negative STFT magnitudes."""

    magnitudes: np.ndarray  # (num_frames, num_bins)
    frame_hop: float  # seconds
    window_len: float  # seconds
    freq_resolution: float  # Hz per bin

    def __post_init__(self):
        mags = np.asarray(self.magnitudes, dtype=np.float64)
        if mags.ndim != 2:
            raise SignalError(f"magnitudes must be 2-D, got shape {mags.shape}")
        if np.any(mags < 0):
            raise SignalError("spectrogram magnitudes must be non-negative")
        object.__setattr__(self, "magnitudes", mags)

    @property
    def num_frames(self) -> int:
        return self.magnitudes.shape[0]

    @property
    def num_bins(self) -> int:
        return self.magnitudes.shape[1]

    @property
    def freqs(self) -> np.ndarray:
        return np.arange(self.num_bins) * self.freq_resolution

    @property
    def frame_times(self) -> np.ndarray:
        """Window-center time of each frame."""
        return np.arange(self.num_frames) * self.frame_hop + self.window_len / 2.0


def derive_rng(seed: int, *labels) -> np.random.Generator:
    """Deterministic, independent RNG stream for (seed, labels).

    Labels are hashed into the seed material so distinct pipeline stages
    (or distinct utterances) get decorrelated streams from one root seed.
    """
    material = "\x1f".join(str(label) for label in labels).encode("utf-8")
    digest = hashlib.sha256(material).digest()
    words = [int.from_bytes(digest[i : i + 8], "little") for i in range(0, 32, 8)]
    return np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, *words])


def resample(samples: np.ndarray, rate: int, target_rate: int) -> np.ndarray:
    """Polyphase resampling; output length is ceil(len * target / rate)."""
    if rate == target_rate:
        return np.asarray(samples, dtype=np.float64)
    g = math.gcd(int(target_rate), int(rate))
    return scipy.signal.resample_poly(
        np.asarray(samples, dtype=np.float64), target_rate // g, rate // g
    )


def read_wav(path, target_rate: int | None = None) -> Waveform:
    """Read a PCM WAV file as a mono float64 Waveform.

    Supports 16/24/32-bit integer and 32/64-bit float encodings; stereo is
    downmixed by averaging. If target_rate is given the audio is resampled.

    Raises WavFormatError for empty, corrupt, or unsupported files.
    """
    path = str(path)
    try:
        rate, data = scipy.io.wavfile.read(path)
    except Exception as exc:
        raise WavFormatError(f"cannot read WAV file {path!r}: {exc}") from exc
    if data.size == 0:
        raise WavFormatError(f"WAV file {path!r} contains no samples")
    if data.ndim == 2:
        data = data.mean(axis=1)
    elif data.ndim != 1:
        raise WavFormatError(f"unsupported channel layout in {path!r}: shape {data.shape}")
    kind = data.dtype.kind
    if kind == "i":
        samples = data.astype(np.float64) / _PCM16_FULL_SCALE if data.dtype == np.int16 else (
            data.astype(np.float64) / float(np.iinfo(data.dtype).max)
        )
    elif kind == "u":  # uint8 WAV is offset-binary
        samples = (data.astype(np.float64) - 128.0) / 127.0
    elif kind == "f":
        samples = data.astype(np.float64)
    else:
        raise WavFormatError(f"unsupported sample encoding {data.dtype} in {path!r}")
    if target_rate is not None and target_rate != rate:
        samples = resample(samples, rate, target_rate)
        rate = target_rate
    return Waveform(samples, int(rate))


def write_wav(path, wav: Waveform) -> None:
    """Write 16-bit PCM. Samples are clipped to [-1, 1] first."""
    clipped = np.clip(wav.samples, -1.0, 1.0)
    pcm = np.round(clipped * _PCM16_FULL_SCALE).astype(np.int16)
    scipy.io.wavfile.write(str(path), wav.sample_rate, pcm)


def probe_wav_header(path) -> bool:
    """Cheap validity check (header only) used when scanning corpora."""
    try:
        with _wave.open(str(path), "rb") as handle:
            return handle.getnframes() > 0
    except Exception:
        # scipy accepts some encodings the wave module refuses (e.g. float32)
        try:
            rate, data = scipy.io.wavfile.read(str(path))
            return data.size > 0
        except Exception:
            return False


def _window_params(sample_rate: int, window_len: float, hop: float, nfft: int | None):
    win = int(round(window_len * sample_rate))
    hop_samps = int(round(hop * sample_rate))
    if hop_samps <= 0 or win < hop_samps:
        raise SignalError(f"need window_len >= hop > 0, got {window_len}, {hop}")
    if nfft is None:
        nfft = 1 << max(win - 1, 1).bit_length()
    if nfft < win:
        raise SignalError(f"nfft {nfft} shorter than window {win}")
    return win, hop_samps, int(nfft)


def stft(
    wav: Waveform,
    window_len: float = DEFAULT_WINDOW,
    hop: float = DEFAULT_HOP,
    nfft: int | None = None,
) -> Spectrogram:
    """Short-time magnitude spectrogram (Hann window, one-sided).

    Frames start at multiples of the hop; energy is Parseval-consistent
    with the input up to the usual windowing constants.

    Raises SignalError("signal too short") if wav is shorter than one window.
    """
    win, hop_samps, nfft = _window_params(wav.sample_rate, window_len, hop, nfft)
    if len(wav) < win:
        raise SignalError("signal too short for the requested STFT window")
    frames = _frame_signal(wav.samples, win, hop_samps)
    window = scipy.signal.get_window("hann", win, fftbins=True)
    mags = np.abs(np.fft.rfft(frames * window, n=nfft, axis=1))
    return Spectrogram(
        magnitudes=mags,
        frame_hop=hop_samps / wav.sample_rate,
        window_len=win / wav.sample_rate,
        freq_resolution=wav.sample_rate / nfft,
    )


def _frame_signal(samples: np.ndarray, win: int, hop_samps: int) -> np.ndarray:
    num_frames = 1 + (len(samples) - win) // hop_samps
    idx = np.arange(win)[None, :] + hop_samps * np.arange(num_frames)[:, None]
    return samples[idx]


def stft_complex(
    samples: np.ndarray, sample_rate: int, window_len: float, hop: float, nfft: int | None = None
):
    """Complex STFT used by the mask-based separators.

    Returns (spectra (num_frames, nfft//2+1), win, hop_samps, nfft). The
    input is expected to be pre-padded by the caller if edge-perfect
    reconstruction is needed.
    """
    win, hop_samps, nfft = _window_params(sample_rate, window_len, hop, nfft)
    if len(samples) < win:
        raise SignalError("signal too short for the requested STFT window")
    frames = _frame_signal(np.asarray(samples, dtype=np.float64), win, hop_samps)
    window = scipy.signal.get_window("hann", win, fftbins=True)
    spectra = np.fft.rfft(frames * window, n=nfft, axis=1)
    return spectra, win, hop_samps, nfft


def istft_complex(
    spectra: np.ndarray, win: int, hop_samps: int, nfft: int, length: int
) -> np.ndarray:
    """Weighted overlap-add inverse of stft_complex (Hann analysis and
    synthesis windows, squared-window normalization)."""
    window = scipy.signal.get_window("hann", win, fftbins=True)
    frames = np.fft.irfft(spectra, n=nfft, axis=1)[:, :win] * window
    num_frames = frames.shape[0]
    total = win + hop_samps * (num_frames - 1)
    out = np.zeros(total)
    norm = np.zeros(total)
    wsq = window**2
    for i in range(num_frames):
        start = i * hop_samps
        out[start : start + win] += frames[i]
        norm[start : start + win] += wsq
    good = norm > 1e-10
    out[good] /= norm[good]
    if total < length:
        out = np.concatenate([out, np.zeros(length - total)])
    return out[:length]
