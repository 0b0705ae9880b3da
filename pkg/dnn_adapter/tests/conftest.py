import numpy as np
import pytest
import torch

from dnn_adapter import build_model, save_bundle

SMALL_CONFIGS = {
    "conv-tasnet": {"enc_filters": 64, "bottleneck": 32, "conv_channels": 64,
                    "num_blocks": 4, "num_repeats": 2, "skip_channels": 32},
    "dpt-net": {"enc_filters": 32, "chunk_size": 50, "num_layers": 2,
                "attention_heads": 2, "ffn_hidden": 32},
}


@pytest.fixture(scope="session")
def small_checkpoint(tmp_path_factory):
    """Seeded random-weight Conv-TasNet bundle for wiring tests."""
    torch.manual_seed(7)
    model = build_model("conv-tasnet", SMALL_CONFIGS["conv-tasnet"])
    path = tmp_path_factory.mktemp("ckpt") / "small_convtasnet.pt"
    save_bundle(path, model)
    return path


def make_mixture_wav(path, seconds=1.0, rate=16000, seed=0):
    rng = np.random.default_rng(seed)
    t = np.arange(int(seconds * rate)) / rate
    wav = 0.3 * np.sin(2 * np.pi * 220 * t) + 0.3 * np.sin(2 * np.pi * 147 * t)
    wav += 0.02 * rng.normal(size=len(t))
    pcm = np.round(np.clip(wav, -1, 1) * 32767).astype(np.int16)
    import scipy.io.wavfile

    scipy.io.wavfile.write(str(path), rate, pcm)
    return path
