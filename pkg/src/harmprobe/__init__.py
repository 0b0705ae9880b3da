"""harmprobe: harmonicity probing toolkit for source separators.

Synthesizes harmonic and frequency-jittered probe stimuli (tone
complexes and jittered-harmonic speech), builds matched two-source
mixture datasets across harmonicity conditions, and scores any separator
with permutation-invariant SI-SNR / SDR improvement.
"""

__version__ = "0.1.0"

from .core import (  # noqa: F401
    CANONICAL_RATE,
    SignalError,
    Spectrogram,
    WavFormatError,
    Waveform,
    derive_rng,
    read_wav,
    resample,
    stft,
    write_wav,
)
from .tones import (  # noqa: F401
    JitterError,
    JitterProfile,
    NyquistError,
    Scenario,
    ScenarioKind,
    ScenarioParams,
    ToneComplexSpec,
    build_scenario,
    sample_jitter,
    synth_tone_complex,
)
from .pitch import F0Config, F0Track, constant_f0_track, track_f0  # noqa: F401
from .speech import (  # noqa: F401
    HarmonicModel,
    analyze_harmonics,
    jitter_directory,
    jitter_speech,
    jitter_utterance,
    resynthesize,
)
from .mixtures import (  # noqa: F401
    MixtureManifest,
    MixtureRecord,
    MixtureSpec,
    build_dataset,
    mix,
)
from .metrics import (  # noqa: F401
    SeparationScore,
    eval_manifest,
    pit_eval,
    sdr,
    sdri,
    si_snr,
)
from .separators import (  # noqa: F401
    HarmonicCombConfig,
    SeparatorSpec,
    harmonic_comb_separate,
    oracle_irm,
    run_external,
)
