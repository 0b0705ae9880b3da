"""File-contract separation: one input WAV in, two estimate WAVs out.

Implements the external-separator contract of the probing harness:
given `input.wav`, write `input_src1.wav` and `input_src2.wav` into the
output directory, mono PCM at the input's sample rate and length, plus a
JSON sidecar recording checkpoint provenance. Inference is
deterministic: eval mode, no sampling, no grad.
"""

import json
import logging
import math
import pathlib

import numpy as np
import scipy.io.wavfile
import scipy.signal
import torch

from .checkpoints import LoadedModel

log = logging.getLogger(__name__)

PCM_SCALE = 32767.0


class InferenceError(RuntimeError):
    """Separation failed on a valid, loaded model."""


def read_wav_mono(path):
    rate, data = scipy.io.wavfile.read(str(path))
    if data.size == 0:
        raise InferenceError(f"empty WAV file: {path}")
    if data.ndim == 2:
        data = data.mean(axis=1)
    if data.dtype.kind == "i":
        samples = data.astype(np.float64) / float(max(np.iinfo(data.dtype).max, 1))
    elif data.dtype.kind == "u":
        samples = (data.astype(np.float64) - 128.0) / 127.0
    else:
        samples = data.astype(np.float64)
    return samples, int(rate)


def write_wav_pcm16(path, samples: np.ndarray, rate: int) -> None:
    pcm = np.round(np.clip(samples, -1.0, 1.0) * PCM_SCALE).astype(np.int16)
    scipy.io.wavfile.write(str(path), rate, pcm)


def _resample(samples: np.ndarray, rate: int, target: int) -> np.ndarray:
    if rate == target:
        return samples
    g = math.gcd(rate, target)
    return scipy.signal.resample_poly(samples, target // g, rate // g)


def separate_file(loaded: LoadedModel, input_wav, output_dir) -> list:
    """Run one mixture through the model and write the contract outputs.

    Returns the two estimate paths. If the file's rate differs from the
    checkpoint's training rate, audio is resampled for inference and the
    estimates are resampled back (with a warning), so the contract's
    rate/length rules hold regardless.
    """
    input_wav = pathlib.Path(input_wav)
    output_dir = pathlib.Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)

    samples, file_rate = read_wav_mono(input_wav)
    model_rate = loaded.sample_rate
    if file_rate != model_rate:
        log.warning(
            "input at %d Hz but checkpoint expects %d Hz; resampling both ways",
            file_rate, model_rate,
        )
    feed = _resample(samples, file_rate, model_rate)

    with torch.no_grad():
        batch = torch.from_numpy(np.ascontiguousarray(feed, dtype=np.float32)).unsqueeze(0)
        try:
            out = loaded.model(batch)
        except Exception as exc:
            raise InferenceError(f"model forward pass failed: {exc}") from exc
    if out.dim() == 2:  # tolerate (sources, samples) outputs
        out = out.unsqueeze(0)
    if out.dim() != 3 or out.shape[1] < 2:
        raise InferenceError(f"expected (batch, 2, samples) output, got {tuple(out.shape)}")
    estimates = out[0, :2].cpu().double().numpy()

    paths = []
    stem = input_wav.stem
    for idx in range(2):
        est = _resample(estimates[idx], model_rate, file_rate)
        if len(est) < len(samples):
            est = np.concatenate([est, np.zeros(len(samples) - len(est))])
        est = est[: len(samples)]
        peak = np.max(np.abs(est))
        if peak > 1.0:
            est = est / peak
        dest = output_dir / f"{stem}_src{idx + 1}.wav"
        write_wav_pcm16(dest, est, file_rate)
        paths.append(dest)

    sidecar = {
        "adapter": "dnn-adapter",
        "architecture": loaded.architecture,
        "checkpoint": loaded.source,
        "checkpoint_fingerprint": loaded.fingerprint,
        "model_sample_rate": model_rate,
        "input": input_wav.name,
        "input_sample_rate": file_rate,
    }
    (output_dir / f"{stem}_adapter.json").write_text(
        json.dumps(sidecar, indent=2, sort_keys=True)
    )
    return paths
