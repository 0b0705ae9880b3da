"""Checkpoint resolution and loading.

Three checkpoint sources are supported, probed in this order:

1. TorchScript files (any architecture): loaded with torch.jit.load; the
   module must map a (batch, samples) float tensor to
   (batch, 2, samples).
2. Bundle files: this package's documented format, a torch.save dict
   {"format": "dnn-adapter-bundle", "version": 1, "architecture": ...,
   "config": {...}, "sample_rate": 16000, "state_dict": {...}} for the
   bundled Conv-TasNet / DPT-Net implementations.
3. Model-hub identifiers (e.g. "org/model"): resolved via
   huggingface_hub when it is installed and the network is reachable;
   otherwise a LoadError explains what to install or download.
"""

import hashlib
import pathlib
import warnings
from dataclasses import dataclass

import torch

from .models import build_model

BUNDLE_FORMAT = "dnn-adapter-bundle"
BUNDLE_VERSION = 1
DEFAULT_SAMPLE_RATE = 16000


class LoadError(RuntimeError):
    """Checkpoint could not be resolved or loaded (environment failure)."""


@dataclass(frozen=True)
class LoadedModel:
    model: object  # nn.Module or ScriptModule; callable (batch, T) -> (batch, 2, T)
    architecture: str
    sample_rate: int
    source: str
    fingerprint: str


def save_bundle(path, model, sample_rate: int = DEFAULT_SAMPLE_RATE) -> None:
    """Write a bundle checkpoint for one of the bundled architectures."""
    payload = {
        "format": BUNDLE_FORMAT,
        "version": BUNDLE_VERSION,
        "architecture": model.architecture,
        "config": model.cfg.to_dict(),
        "sample_rate": int(sample_rate),
        "state_dict": model.state_dict(),
    }
    torch.save(payload, str(path))


def load_model(source: str) -> LoadedModel:
    """Resolve `source` (local path or hub id) into a ready inference model."""
    path = pathlib.Path(source)
    if path.exists():
        return _load_local(path)
    if "/" in source and not source.endswith(".pt"):
        local = _resolve_hub(source)
        return _load_local(local, origin=source)
    raise LoadError(f"checkpoint not found: {source}")


def _load_local(path: pathlib.Path, origin: str | None = None) -> LoadedModel:
    fingerprint = "sha256:" + hashlib.sha256(path.read_bytes()).hexdigest()
    source = origin or str(path)
    try:
        with warnings.catch_warnings():
            # TorchScript is deprecated upstream but remains the usual
            # export format for published separation checkpoints
            warnings.simplefilter("ignore", DeprecationWarning)
            scripted = torch.jit.load(str(path), map_location="cpu")
    except Exception:
        scripted = None
    if scripted is not None:
        scripted.eval()
        return LoadedModel(scripted, "torchscript", DEFAULT_SAMPLE_RATE, source, fingerprint)

    try:
        payload = torch.load(str(path), map_location="cpu", weights_only=True)
    except Exception as exc:
        raise LoadError(f"cannot load checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format") != BUNDLE_FORMAT:
        raise LoadError(
            f"{path} is neither a TorchScript module nor a {BUNDLE_FORMAT} file"
        )
    if payload.get("version") != BUNDLE_VERSION:
        raise LoadError(f"unsupported bundle version {payload.get('version')}")
    model = build_model(payload["architecture"], payload.get("config"))
    try:
        model.load_state_dict(payload["state_dict"], strict=True)
    except Exception as exc:
        raise LoadError(f"state dict does not match {payload['architecture']}: {exc}") from exc
    model.eval()
    return LoadedModel(
        model,
        payload["architecture"],
        int(payload.get("sample_rate", DEFAULT_SAMPLE_RATE)),
        source,
        fingerprint,
    )


def _resolve_hub(model_id: str) -> pathlib.Path:
    try:
        from huggingface_hub import hf_hub_download
    except ImportError as exc:
        raise LoadError(
            f"{model_id!r} looks like a model-hub id, but huggingface_hub is not "
            "installed; install it or download the checkpoint and pass a local path"
        ) from exc
    try:
        return pathlib.Path(hf_hub_download(model_id, filename="model.pt"))
    except Exception as exc:
        raise LoadError(f"could not fetch {model_id!r} from the model hub: {exc}") from exc
