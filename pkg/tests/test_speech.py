import json

import numpy as np
import pytest

from harmprobe.core import Waveform, read_wav, write_wav
from harmprobe.metrics import si_snr
from harmprobe.pitch import constant_f0_track, track_f0
from harmprobe.speech import (
    HarmonicModel,
    TrackMismatchError,
    analyze_harmonics,
    jitter_directory,
    jitter_speech,
    jitter_utterance,
    resynthesize,
)
from harmprobe.tones import JitterProfile, ToneComplexSpec, sample_jitter, synth_tone_complex
from harmprobe.toys import speech_like_utterance, synthetic_vowel

from conftest import harmonic_deviations, measured_inst_freq


class TestAnalyzeHarmonics:
    def test_recovers_equal_amplitudes_within_5pct(self):
        wav = synth_tone_complex(ToneComplexSpec(f0=120.0, num_harmonics=5, duration=1.0))
        track = constant_f0_track(120.0, wav.duration)
        model = analyze_harmonics(wav, track, max_harmonics=5)
        steady = slice(20, model.num_frames - 20)
        amps = model.harmonic_amps[steady]
        mean_amp = amps.mean()
        assert np.all(np.abs(amps - mean_amp) / mean_amp < 0.05)

    def test_unvoiced_input_residual_is_input_exactly(self, white_noise):
        track = track_f0(white_noise)
        model = analyze_harmonics(white_noise, track)
        assert not model.f0_track.voiced.any()
        assert np.all(model.harmonic_amps == 0.0)
        assert np.array_equal(model.residual.samples, white_noise.samples)

    def test_residual_matches_injected_noise_within_3db(self):
        rng = np.random.default_rng(8)
        clean = synthetic_vowel(130.0, duration=1.0, seed=4)
        noise = rng.normal(0.0, clean.rms() / 10, size=len(clean))  # 20 dB SNR
        noisy = Waveform(clean.samples + noise, clean.sample_rate)
        model = analyze_harmonics(noisy, track_f0(noisy))
        ratio_db = 10 * np.log10(np.sum(model.residual.samples**2) / np.sum(noise**2))
        assert abs(ratio_db) < 3.0

    def test_amplitudes_zero_above_nyquist(self):
        vowel = synthetic_vowel(300.0, duration=0.5, seed=1)
        track = constant_f0_track(300.0, vowel.duration)
        model = analyze_harmonics(vowel, track, max_harmonics=40)
        assert np.all(model.harmonic_amps[:, 27:] == 0.0)  # 28*300 > 0.95*8000

    def test_track_from_other_signal_rejected(self, vowel_120):
        long_track = constant_f0_track(120.0, 5.0)
        with pytest.raises(TrackMismatchError):
            analyze_harmonics(vowel_120, long_track)


class TestResynthesize:
    def test_zero_jitter_is_identity(self, vowel_120):
        out = jitter_speech(vowel_120, 0.0, seed=3)
        assert si_snr(out, vowel_120) >= 15.0  # round-trip fidelity floor
        assert np.max(np.abs(out.samples - vowel_120.samples)) < 1e-12

    def test_profile_shorter_than_model_rejected(self, vowel_120):
        model = analyze_harmonics(vowel_120, track_f0(vowel_120), max_harmonics=10)
        with pytest.raises(ValueError, match="offsets"):
            resynthesize(model, JitterProfile.zero(5))

    def test_male_range_offsets_at_3pct(self):
        # J = 0.03 at f0 = 120 Hz bounds every harmonic's shift by 3.6 Hz
        vowel = synthetic_vowel(120.0, duration=1.2, seed=5)
        result = jitter_utterance(vowel, 0.03, seed=11)
        constructed = np.abs(result.profile.offsets) * 120.0
        assert np.all(constructed <= 3.6)
        measured = harmonic_deviations(result.waveform, 120.0, range(1, 9))
        assert np.all(measured <= 3.6 + 0.8)  # instrument slack under one bin

    def test_peak_tracked_deviation_up_to_30pct(self):
        vowel = synthetic_vowel(140.0, duration=1.2, seed=6)
        result = jitter_utterance(vowel, 0.30, seed=2)
        harmonics = range(1, 9)
        measured = harmonic_deviations(result.waveform, 140.0, harmonics)
        constructed = np.abs(result.profile.offsets[: len(measured)]) * 140.0
        assert np.all(measured <= 0.30 * 140.0 + 1.0)
        assert np.max(measured) > 0.10 * 140.0  # deviations actually realized
        assert np.all(np.abs(measured - constructed) < 1.5)

    def test_mean_deviation_grows_monotonically_with_bound(self):
        vowel = synthetic_vowel(120.0, duration=1.0, seed=9)
        means = []
        for bound in (0.01, 0.1, 0.3):
            out = jitter_speech(vowel, bound, seed=13)
            means.append(np.mean(harmonic_deviations(out, 120.0, range(1, 9))))
        assert means[0] < means[1] < means[2]

    def test_bit_identical_for_same_seed(self):
        utt = speech_like_utterance(seed=21)
        first = jitter_speech(utt, 0.2, seed=7)
        second = jitter_speech(utt, 0.2, seed=7)
        assert np.array_equal(first.samples, second.samples)

    def test_unvoiced_content_bit_preserved(self):
        utt = speech_like_utterance(seed=30)
        result = jitter_utterance(utt, 0.25, seed=3)
        track = result.model.f0_track
        fs = utt.sample_rate
        # samples more than one frame away from any voiced frame center
        protected = np.ones(len(utt), dtype=bool)
        margin = int(track.frame * fs)
        for center in track.frame_times[track.voiced] * fs:
            lo = max(0, int(center) - margin)
            hi = min(len(utt), int(center) + margin)
            protected[lo:hi] = False
        assert protected.sum() > 1000
        assert np.array_equal(result.waveform.samples[protected], utt.samples[protected])

    def test_energy_conserved_within_1db(self):
        utt = speech_like_utterance(seed=17)
        for bound in (0.1, 0.3):
            out = jitter_speech(utt, bound, seed=5)
            assert abs(20 * np.log10(out.rms() / utt.rms())) < 1.0

    def test_instantaneous_frequency_law(self):
        # rendered frequency must be (n + J_n) * f0 at every voiced sample
        f0 = 140.0
        vowel = synthetic_vowel(f0, duration=1.0, seed=3)
        track = constant_f0_track(f0, vowel.duration)
        model = analyze_harmonics(vowel, track, max_harmonics=12)
        profile = sample_jitter(0.2, 12, seed=9)
        fs = vowel.sample_rate
        interior = slice(int(0.2 * fs), int(0.8 * fs))
        for k in (0, 3, 7, 11):
            amps = np.zeros_like(model.harmonic_amps)
            amps[:, k] = 0.1
            probe = HarmonicModel(
                model.f0_track, amps, model.harmonic_phases, model.max_harmonics,
                Waveform(np.zeros(len(vowel)), fs), fs,
            )
            rendered = resynthesize(probe, profile)
            expected = (k + 1 + profile.offsets[k]) * f0
            inst = measured_inst_freq(rendered.samples, fs, expected)
            assert np.max(np.abs(inst[interior] - expected)) < 0.1

    def test_speech_like_round_trip_floor(self):
        utt = speech_like_utterance(seed=40)
        out = jitter_speech(utt, 0.0, seed=1)
        assert si_snr(out, utt) >= 8.0


class TestBatchMode:
    def test_directory_mirrored_with_sidecars(self, tmp_path):
        src = tmp_path / "in"
        (src / "nested").mkdir(parents=True)
        write_wav(src / "a.wav", speech_like_utterance(seed=1))
        write_wav(src / "nested" / "b.wav", speech_like_utterance(seed=2))
        out = tmp_path / "out"
        metas = jitter_directory(src, out, 0.1, seed=5)
        assert len(metas) == 2
        assert (out / "a.wav").exists()
        assert (out / "nested" / "b.wav").exists()
        sidecar = json.loads((out / "nested" / "b.json").read_text())
        assert sidecar["jitter_bound"] == 0.1
        assert len(sidecar["offsets"]) == sidecar["max_harmonics"]

    def test_parallel_matches_serial(self, tmp_path):
        src = tmp_path / "in"
        src.mkdir()
        for i in range(3):
            write_wav(src / f"u{i}.wav", speech_like_utterance(seed=50 + i))
        jitter_directory(src, tmp_path / "serial", 0.2, seed=9, jobs=1)
        jitter_directory(src, tmp_path / "parallel", 0.2, seed=9, jobs=3)
        for i in range(3):
            a = read_wav(tmp_path / "serial" / f"u{i}.wav")
            b = read_wav(tmp_path / "parallel" / f"u{i}.wav")
            assert np.array_equal(a.samples, b.samples)

    def test_empty_directory_raises(self, tmp_path):
        (tmp_path / "in").mkdir()
        with pytest.raises(FileNotFoundError):
            jitter_directory(tmp_path / "in", tmp_path / "out", 0.1, seed=0)
