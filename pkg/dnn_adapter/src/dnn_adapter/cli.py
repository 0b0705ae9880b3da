"""dnn-adapter command line: the external-separator contract for
pretrained Conv-TasNet / DPT-Net checkpoints.

Exit codes: 0 success, 1 usage, 2 inference failure, 3 checkpoint/load
failure — so the probing harness can tell a broken environment from a
failing record.
"""

import pathlib
import sys

import click

from .adapter import InferenceError, separate_file
from .checkpoints import LoadError, load_model, save_bundle
from .models import ARCHITECTURES, build_model

click.UsageError.exit_code = 1


class InferenceFailure(click.ClickException):
    exit_code = 2


class LoadFailure(click.ClickException):
    exit_code = 3


@click.group()
@click.version_option(version="0.1.0", prog_name="dnn-adapter")
def main():
    """Serve pretrained separation checkpoints through the file contract."""


@main.command()
@click.argument("input_wav", type=click.Path(exists=True, path_type=pathlib.Path))
@click.argument("output_dir", type=click.Path(path_type=pathlib.Path))
@click.option("--checkpoint", required=True,
              help="TorchScript file, adapter bundle, or model-hub id.")
def separate(input_wav, output_dir, checkpoint):
    """Separate INPUT_WAV into `<stem>_src1.wav` / `<stem>_src2.wav`."""
    try:
        loaded = load_model(checkpoint)
    except LoadError as exc:
        raise LoadFailure(str(exc))
    try:
        paths = separate_file(loaded, input_wav, output_dir)
    except InferenceError as exc:
        raise InferenceFailure(str(exc))
    for path in paths:
        click.echo(str(path))


@main.command()
@click.option("--checkpoint", required=True)
def info(checkpoint):
    """Print what a checkpoint resolves to."""
    try:
        loaded = load_model(checkpoint)
    except LoadError as exc:
        raise LoadFailure(str(exc))
    click.echo(f"architecture: {loaded.architecture}")
    click.echo(f"sample_rate: {loaded.sample_rate}")
    click.echo(f"fingerprint: {loaded.fingerprint}")


@main.command("make-test-checkpoint")
@click.option("-o", "--out", required=True, type=click.Path(path_type=pathlib.Path))
@click.option("--arch", default="conv-tasnet",
              type=click.Choice(sorted(ARCHITECTURES)), show_default=True)
@click.option("--seed", default=0, type=int, show_default=True)
@click.option("--small/--full", default=True, show_default=True,
              help="Small config for wiring tests vs published-size config.")
def make_test_checkpoint(out, arch, seed, small):
    """Write a seeded random-weight bundle (wiring validation only).

    Random weights separate nothing useful; this exists so the full
    harness-adapter-harness loop can be exercised without a trained
    model.
    """
    import torch

    torch.manual_seed(seed)
    config = None
    if small:
        config = {
            "conv-tasnet": {"enc_filters": 64, "bottleneck": 32, "conv_channels": 64,
                            "num_blocks": 4, "num_repeats": 2, "skip_channels": 32},
            "dpt-net": {"enc_filters": 32, "chunk_size": 50, "num_layers": 2,
                        "attention_heads": 2, "ffn_hidden": 32},
        }[arch]
    model = build_model(arch, config)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_bundle(out, model)
    click.echo(f"wrote {arch} test checkpoint to {out}")


if __name__ == "__main__":
    sys.exit(main())
