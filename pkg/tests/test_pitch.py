import numpy as np
import pytest

from harmprobe.core import Waveform
from harmprobe.pitch import F0Config, F0Track, constant_f0_track, track_f0
from harmprobe.toys import synthetic_vowel


def test_constant_vowel_tracked_within_2hz(vowel_120):
    track = track_f0(vowel_120)
    assert track.voiced.mean() > 0.95
    assert abs(track.median_voiced_f0() - 120.0) < 2.0


@pytest.mark.parametrize("f0", [90.0, 150.0, 220.0, 320.0])
def test_tracks_across_the_search_range(f0):
    vowel = synthetic_vowel(f0, duration=0.6, seed=7)
    track = track_f0(vowel)
    assert track.voiced.mean() > 0.9
    assert abs(track.median_voiced_f0() - f0) < 2.0


def test_white_noise_mostly_unvoiced(white_noise):
    track = track_f0(white_noise)
    assert track.voiced.mean() < 0.10


def test_silence_all_unvoiced():
    track = track_f0(Waveform(np.zeros(16000), 16000))
    assert not track.voiced.any()
    assert np.all(track.f0 == 0.0)


def test_frame_times_strictly_increasing(vowel_120):
    track = track_f0(vowel_120)
    hops = np.diff(track.frame_times)
    assert np.all(hops > 0)
    assert np.allclose(hops, track.hop)


def test_noisy_vowel_still_tracked():
    vowel = synthetic_vowel(130.0, duration=0.8, seed=2, noise_rms=0.1)
    track = track_f0(vowel)
    assert track.voiced.mean() > 0.8
    assert abs(track.median_voiced_f0() - 130.0) < 2.0


def test_unvoiced_frames_have_zero_f0(white_noise):
    track = track_f0(white_noise)
    assert np.all(track.f0[~track.voiced] == 0.0)


def test_constant_track_helper_shape():
    track = constant_f0_track(140.0, 1.0)
    assert track.voiced.all()
    assert np.all(track.f0 == 140.0)
    assert track.frame_times[0] == pytest.approx(F0Config().frame / 2)


def test_track_invariant_rejects_voiced_zero_mismatch():
    with pytest.raises(ValueError):
        F0Track(
            frame_times=np.array([0.0, 0.005]),
            f0=np.array([100.0, 100.0]),
            voiced=np.array([True, False]),
            periodicity=np.array([1.0, 1.0]),
            hop=0.005,
            frame=0.025,
        )
