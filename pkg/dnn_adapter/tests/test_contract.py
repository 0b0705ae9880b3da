"""Contract conformance, exercised through the probing harness's own
external interfaces: its CLI, manifest schema, and the file contract
`CMD {input_wav} {output_dir}` -> `<stem>_src{1,2}.wav`."""

import json
import subprocess
import sys

import numpy as np
import pytest
import scipy.io.wavfile

from conftest import make_mixture_wav


def run(args, **kwargs):
    return subprocess.run(args, capture_output=True, text=True, **kwargs)


class TestFileContract:
    def test_writes_both_estimates_same_rate_and_length(self, small_checkpoint, tmp_path):
        mix = make_mixture_wav(tmp_path / "mix0.wav", seconds=0.8)
        out = tmp_path / "est"
        proc = run(["dnn-adapter", "separate", str(mix), str(out),
                    "--checkpoint", str(small_checkpoint)])
        assert proc.returncode == 0, proc.stderr
        rate_in, data_in = scipy.io.wavfile.read(mix)
        for idx in (1, 2):
            rate, data = scipy.io.wavfile.read(out / f"mix0_src{idx}.wav")
            assert rate == rate_in
            assert len(data) == len(data_in)
            assert data.dtype == np.int16

    def test_sidecar_records_checkpoint_provenance(self, small_checkpoint, tmp_path):
        mix = make_mixture_wav(tmp_path / "mix1.wav")
        out = tmp_path / "est"
        run(["dnn-adapter", "separate", str(mix), str(out),
             "--checkpoint", str(small_checkpoint)])
        sidecar = json.loads((out / "mix1_adapter.json").read_text())
        assert sidecar["architecture"] == "conv-tasnet"
        assert sidecar["checkpoint_fingerprint"].startswith("sha256:")

    def test_silence_input_gives_near_silent_outputs(self, small_checkpoint, tmp_path):
        silent = tmp_path / "silence.wav"
        scipy.io.wavfile.write(silent, 16000, np.zeros(8000, dtype=np.int16))
        out = tmp_path / "est"
        proc = run(["dnn-adapter", "separate", str(silent), str(out),
                    "--checkpoint", str(small_checkpoint)])
        assert proc.returncode == 0
        for idx in (1, 2):
            _, data = scipy.io.wavfile.read(out / f"silence_src{idx}.wav")
            assert np.max(np.abs(data)) <= 1  # at most one quantization step

    def test_deterministic_inference(self, small_checkpoint, tmp_path):
        mix = make_mixture_wav(tmp_path / "mix2.wav")
        for name in ("a", "b"):
            run(["dnn-adapter", "separate", str(mix), str(tmp_path / name),
                 "--checkpoint", str(small_checkpoint)])
        for idx in (1, 2):
            first = (tmp_path / "a" / f"mix2_src{idx}.wav").read_bytes()
            second = (tmp_path / "b" / f"mix2_src{idx}.wav").read_bytes()
            assert first == second

    def test_off_rate_input_resampled_and_warned(self, small_checkpoint, tmp_path):
        mix8k = tmp_path / "mix8k.wav"
        rng = np.random.default_rng(1)
        scipy.io.wavfile.write(
            mix8k, 8000, (3000 * rng.normal(size=8000)).astype(np.int16)
        )
        out = tmp_path / "est"
        proc = run(["dnn-adapter", "separate", str(mix8k), str(out),
                    "--checkpoint", str(small_checkpoint)])
        assert proc.returncode == 0
        rate, data = scipy.io.wavfile.read(out / "mix8k_src1.wav")
        assert rate == 8000
        assert len(data) == 8000


class TestExitCodes:
    def test_load_failure_exits_3(self, tmp_path):
        mix = make_mixture_wav(tmp_path / "m.wav")
        proc = run(["dnn-adapter", "separate", str(mix), str(tmp_path / "o"),
                    "--checkpoint", "/nope/missing.pt"])
        assert proc.returncode == 3

    def test_usage_error_exits_1(self):
        proc = run(["dnn-adapter", "separate"])
        assert proc.returncode == 1

    def test_info_command(self, small_checkpoint):
        proc = run(["dnn-adapter", "info", "--checkpoint", str(small_checkpoint)])
        assert proc.returncode == 0
        assert "conv-tasnet" in proc.stdout


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("wiring")
    corpus = root / "corpus"
    ds = root / "ds"
    assert run(["harmprobe", "toy-corpus", "-o", str(corpus), "--speakers", "2",
                "--utterances", "2", "--seed", "3"]).returncode == 0
    assert run(["harmprobe", "build-dataset", str(corpus), "-o", str(ds),
                "--condition", "HH", "--count", "2",
                "--pairing-seed", "4"]).returncode == 0
    return ds


class TestHarnessWiring:
    """Drive the adapter exactly how the probing harness drives any
    external separator: manifest in, estimate files out, report scored."""

    def test_separate_and_eval_through_harness(self, dataset, small_checkpoint, tmp_path):
        est = tmp_path / "est"
        cmd = (f"{sys.executable} -m dnn_adapter.cli separate "
               f"{{input_wav}} {{output_dir}} --checkpoint {small_checkpoint}")
        proc = run(["harmprobe", "separate", str(dataset / "manifest.jsonl"),
                    "-o", str(est), "--separator", "external", "--external-cmd", cmd])
        assert proc.returncode == 0, proc.stderr

        report = tmp_path / "report.jsonl"
        proc = run(["harmprobe", "eval", str(dataset / "manifest.jsonl"), str(est),
                    "-o", str(report)])
        assert proc.returncode == 0, proc.stderr
        lines = [json.loads(line) for line in report.read_text().splitlines()]
        summary = [entry for entry in lines if entry["record_type"] == "summary"][0]
        assert summary["n_scored"] == 2
        assert summary["n_missing"] == 0
        # random weights separate nothing; the wiring, not the score, is under test
        assert np.isfinite(summary["mean_sdri"])
