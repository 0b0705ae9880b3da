import json

import numpy as np
import pytest
from click.testing import CliRunner

from harmprobe.cli import main
from harmprobe.core import read_wav, write_wav
from harmprobe.metrics import si_snr
from harmprobe.toys import (
    make_tone_proxy_corpus,
    make_toy_corpus,
    speech_like_utterance,
    synthetic_vowel,
)


@pytest.fixture()
def runner():
    return CliRunner()


def invoke(runner, args):
    result = runner.invoke(main, args, catch_exceptions=False)
    return result


class TestScenarioCommand:
    def test_alternating_writes_stimulus_files(self, runner, tmp_path):
        out = tmp_path / "scen"
        result = invoke(runner, ["scenario", "alternating", "-o", str(out),
                                 "--jitter", "0,0", "--seed", "3"])
        assert result.exit_code == 0
        for name in ("mixture.wav", "source_a.wav", "source_b.wav", "mixture.png",
                     "mixture.csv", "scenario.json"):
            assert (out / name).exists()
        meta = json.loads((out / "scenario.json").read_text())
        assert meta["provenance"]["toolkit"] == "harmprobe"
        assert meta["f0"] == [110.0, 210.0]

    def test_overlap_metadata_lists_sparse_partials(self, runner, tmp_path):
        out = tmp_path / "ovl"
        result = invoke(runner, ["scenario", "overlap", "-o", str(out), "--mode",
                                 "inharmonic"])
        assert result.exit_code == 0
        meta = json.loads((out / "scenario.json").read_text())
        assert meta["partials_a"] == [200.0, 600.0]
        assert meta["partials_b"] == [100.0, 300.0, 500.0]

    def test_missing_fundamental_metadata_and_spectrogram(self, runner, tmp_path):
        out = tmp_path / "mf"
        result = invoke(runner, ["scenario", "missing-fundamental", "-o", str(out)])
        assert result.exit_code == 0
        meta = json.loads((out / "scenario.json").read_text())
        f0 = meta["f0"][0]
        assert min(meta["partials_a"]) >= 3 * f0 - 1e-9

        # the rendered grid lacks energy rows at F0 and 2*F0 of the test side,
        # judged over the test complex's own bursts (the sources alternate)
        lines = (out / "mixture.csv").read_text().splitlines()
        freqs = np.array([float(v) for v in lines[0].split(",")[1:]])
        times = np.array([float(line.split(",")[0]) for line in lines[1:]])
        grid = np.array([[float(v) for v in line.split(",")[1:]] for line in lines[1:]])
        burst = meta["burst"]
        in_test_burst = np.zeros(len(times), dtype=bool)
        for onset in meta["onsets_a"]:
            in_test_burst |= (times > onset + 0.05) & (times < onset + burst - 0.05)

        def row_db(freq):
            col = int(np.argmin(np.abs(freqs - freq)))
            return grid[in_test_burst, col].max()

        # 32 ms rendering leaves sidelobe skirts; 15 dB still reads as absent
        retained = row_db(3 * f0)
        assert row_db(f0) < retained - 15.0
        assert row_db(2 * f0) < retained - 15.0

    def test_separator_option_writes_estimates_and_scores(self, runner, tmp_path):
        out = tmp_path / "sep"
        result = invoke(runner, ["scenario", "alternating", "-o", str(out),
                                 "--separator", "harmonic-comb"])
        assert result.exit_code == 0
        assert (out / "estimate_1.wav").exists()
        meta = json.loads((out / "scenario.json").read_text())
        assert meta["separator"] == "harmonic-comb"
        assert meta["sdri"] > 5.0

    def test_single_jitter_value_applies_to_both(self, runner, tmp_path):
        out = tmp_path / "single"
        result = invoke(runner, ["scenario", "alternating", "-o", str(out),
                                 "--f0", "110,210", "--jitter", "0"])
        assert result.exit_code == 0
        meta = json.loads((out / "scenario.json").read_text())
        assert meta["jitter"] == [0.0, 0.0]

    def test_config_file_supplies_flag_defaults(self, runner, tmp_path):
        cfg = tmp_path / "recipe.json"
        cfg.write_text(json.dumps({"f0": "100,190", "jitter": "0.1,0.1", "seed": 42}))
        out = tmp_path / "from_config"
        result = invoke(runner, ["scenario", "alternating", "-o", str(out),
                                 "--config", str(cfg)])
        assert result.exit_code == 0
        meta = json.loads((out / "scenario.json").read_text())
        assert meta["f0"] == [100.0, 190.0]
        assert meta["seed"] == 42
        # explicit flags still beat the config file
        out2 = tmp_path / "override"
        invoke(runner, ["scenario", "alternating", "-o", str(out2),
                        "--config", str(cfg), "--seed", "7"])
        assert json.loads((out2 / "scenario.json").read_text())["seed"] == 7

    def test_dry_run_writes_nothing(self, runner, tmp_path):
        out = tmp_path / "dry"
        result = invoke(runner, ["scenario", "alternating", "-o", str(out), "--dry-run"])
        assert result.exit_code == 0
        assert "PLAN" in result.output
        assert not out.exists()

    def test_unknown_kind_is_usage_error(self, runner, tmp_path):
        result = runner.invoke(main, ["scenario", "bogus", "-o", str(tmp_path / "x")])
        assert result.exit_code == 1


class TestJitterCommand:
    def test_round_trip_at_zero_jitter(self, runner, tmp_path):
        src = tmp_path / "in.wav"
        write_wav(src, synthetic_vowel(130.0, duration=0.8, seed=2))
        dst = tmp_path / "out.wav"
        result = invoke(runner, ["jitter", str(src), str(dst), "-J", "0", "--seed", "5"])
        assert result.exit_code == 0
        original = read_wav(src)
        output = read_wav(dst)
        assert si_snr(output, original) >= 15.0
        sidecar = json.loads(dst.with_suffix(".json").read_text())
        assert sidecar["provenance"]["config"]["jitter_bound"] == 0.0

    def test_directory_batch(self, runner, tmp_path):
        src = tmp_path / "in"
        src.mkdir()
        for i in range(2):
            write_wav(src / f"u{i}.wav", speech_like_utterance(seed=60 + i))
        result = invoke(runner, ["jitter", str(src), str(tmp_path / "out"),
                                 "-J", "0.1", "--seed", "2"])
        assert result.exit_code == 0
        assert (tmp_path / "out" / "u0.wav").exists()
        assert (tmp_path / "out" / "u1.json").exists()


class TestMixCommand:
    def test_mix_with_silence_recovers_source(self, runner, tmp_path):
        a = tmp_path / "a.wav"
        write_wav(a, synthetic_vowel(120.0, duration=0.5, seed=1))
        silence = tmp_path / "sil.wav"
        write_wav(silence, speech_like_utterance(seed=1))  # placeholder, overwritten
        import scipy.io.wavfile

        scipy.io.wavfile.write(silence, 16000, np.zeros(8000, dtype=np.int16))
        out = tmp_path / "mixout"
        result = invoke(runner, ["mix", str(a), str(silence), "-o", str(out)])
        assert result.exit_code == 0
        mixture = read_wav(out / "mixture.wav")
        ref_a = read_wav(out / "ref_a.wav")
        assert np.array_equal(mixture.samples, ref_a.samples)


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli_corpus")
    make_toy_corpus(root, num_speakers=3, utterances_per_speaker=2, seed=4)
    return root


class TestDatasetEvalSweep:
    def test_build_separate_eval_roundtrip(self, runner, corpus, tmp_path):
        ds = tmp_path / "ds"
        result = invoke(runner, ["build-dataset", str(corpus), "-o", str(ds),
                                 "--condition", "HH", "--count", "3",
                                 "--pairing-seed", "7"])
        assert result.exit_code == 0
        est = tmp_path / "est"
        result = invoke(runner, ["separate", str(ds / "manifest.jsonl"), "-o", str(est),
                                 "--separator", "oracle-irm"])
        assert result.exit_code == 0
        report_path = tmp_path / "report.jsonl"
        result = invoke(runner, ["eval", str(ds / "manifest.jsonl"), str(est),
                                 "-o", str(report_path)])
        assert result.exit_code == 0
        assert "mean" in result.output
        lines = report_path.read_text().splitlines()
        assert json.loads(lines[0])["schema"] == "harmprobe/eval-report"

    def test_eval_missing_estimates_exits_2(self, runner, corpus, tmp_path):
        ds = tmp_path / "ds2"
        invoke(runner, ["build-dataset", str(corpus), "-o", str(ds),
                        "--condition", "HH", "--count", "2", "--pairing-seed", "1"])
        empty = tmp_path / "empty"
        empty.mkdir()
        result = runner.invoke(main, ["eval", str(ds / "manifest.jsonl"), str(empty)])
        assert result.exit_code == 2

    def test_corpus_env_var_default(self, runner, corpus, tmp_path, monkeypatch):
        monkeypatch.setenv("HARMPROBE_CORPUS", str(corpus))
        ds = tmp_path / "ds3"
        result = invoke(runner, ["build-dataset", "-o", str(ds), "--condition", "HH",
                                 "--count", "2", "--pairing-seed", "1"])
        assert result.exit_code == 0

    def test_degenerate_sweep_single_high_row(self, runner, corpus, tmp_path):
        out = tmp_path / "sweep"
        result = invoke(runner, ["sweep", str(corpus), "-o", str(out),
                                 "--conditions", "HH", "--jitters", "0",
                                 "--separator", "oracle-irm", "--count", "3",
                                 "--pairing-seed", "5"])
        assert result.exit_code == 0
        rows = [json.loads(line) for line in (out / "sweep.jsonl").read_text().splitlines()]
        cells = [r for r in rows if r["record_type"] == "cell"]
        assert len(cells) == 1
        assert cells[0]["condition"] == "HH"
        assert cells[0]["mean_sdri"] > 8.0
        assert cells[0]["status"] == "ok"

    def test_sweep_rerun_is_byte_identical(self, runner, corpus, tmp_path):
        out = tmp_path / "sweep_det"
        args = ["sweep", str(corpus), "-o", str(out), "--conditions", "HH",
                "--jitters", "0", "--separator", "oracle-irm", "--count", "2",
                "--pairing-seed", "5"]
        invoke(runner, args)
        first = (out / "sweep.jsonl").read_bytes()
        invoke(runner, args)
        assert (out / "sweep.jsonl").read_bytes() == first

    def test_sweep_sdri_decreases_with_jitter_on_tone_proxies(self, runner, tmp_path):
        proxies = tmp_path / "tone_corpus"
        make_tone_proxy_corpus(proxies, f0s=(110.0, 210.0), utterances_per_speaker=2)
        out = tmp_path / "sweep_ii"
        result = invoke(runner, ["sweep", str(proxies), "-o", str(out),
                                 "--conditions", "II", "--jitters", "0,0.1,0.2",
                                 "--separator", "harmonic-comb", "--count", "3",
                                 "--pairing-seed", "2", "--jitter-seed", "6"])
        assert result.exit_code == 0
        rows = [json.loads(line) for line in (out / "sweep.jsonl").read_text().splitlines()]
        cells = sorted((r for r in rows if r["record_type"] == "cell"),
                       key=lambda r: r["J"])
        sdris = [c["mean_sdri"] for c in cells]
        assert len(sdris) == 3
        assert sdris[0] > sdris[1] > sdris[2]

    def test_sweep_plot_written(self, runner, corpus, tmp_path):
        out = tmp_path / "sweep_plot"
        result = invoke(runner, ["sweep", str(corpus), "-o", str(out),
                                 "--conditions", "HH", "--jitters", "0",
                                 "--separator", "oracle-irm", "--count", "2",
                                 "--pairing-seed", "5", "--plot"])
        assert result.exit_code == 0
        png = (out / "sweep.png").read_bytes()
        assert png[:8] == b"\x89PNG\r\n\x1a\n"


class TestToyCorpusCommand:
    def test_writes_requested_counts(self, runner, tmp_path):
        out = tmp_path / "corp"
        result = invoke(runner, ["toy-corpus", "-o", str(out), "--speakers", "2",
                                 "--utterances", "2", "--seed", "9"])
        assert result.exit_code == 0
        assert len(list(out.glob("*.wav"))) == 4
