"""Two-source mixture construction and manifest-described datasets.

A dataset is a directory of mixture/reference WAV triples plus a
line-delimited JSON manifest (one header line, one record per mixture).
Pairings, gains, and jittered-side choices are drawn from the pairing
seed only, so datasets built for different jitter values share the exact
same pair/gain lists and differ only in the jittered audio.
"""

import hashlib
import json
import logging
import pathlib
import re
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .core import CANONICAL_RATE, Waveform, derive_rng, probe_wav_header, read_wav, write_wav
from .pitch import F0Config
from .speech import jitter_utterance

log = logging.getLogger(__name__)

MANIFEST_SCHEMA = "harmprobe/mixture-manifest"
MANIFEST_VERSION = 1
MANIFEST_NAME = "manifest.jsonl"
GAIN_RANGE_DB = 2.5  # per-pair level offset drawn uniformly in [-2.5, +2.5] dB
REFERENCE_RMS = 0.05
DEFAULT_SPEAKER_PATTERN = r"^(?P<speaker>[^_]+)_"
CONDITIONS = ("HH", "HI", "IH", "II")


class SampleRateError(ValueError):
    """Sources disagree on sample rate."""


class CorpusError(ValueError):
    """Corpus unusable for dataset construction."""


@dataclass(frozen=True)
class MixtureSpec:
    """Declarative record of how one mixture was made."""

    source_a_path: str
    source_b_path: str
    condition: str  # HH | HI | IH | II; the H side always has jitter 0
    jitter_a: float
    jitter_b: float
    gain_a_db: float
    gain_b_db: float
    seed: int
    num_sources: int = 2

    def __post_init__(self):
        if self.condition not in CONDITIONS:
            raise ValueError(f"condition must be one of {CONDITIONS}, got {self.condition!r}")
        if self.num_sources != 2:
            raise ValueError("only two-source mixtures are supported")
        if self.condition[0] == "H" and self.jitter_a != 0.0:
            raise ValueError("harmonic side a must have jitter_a = 0")
        if self.condition[1] == "H" and self.jitter_b != 0.0:
            raise ValueError("harmonic side b must have jitter_b = 0")


@dataclass(frozen=True)
class MixtureRecord:
    id: str
    mixture_path: str
    ref_a_path: str
    ref_b_path: str
    spec: MixtureSpec


@dataclass
class MixtureManifest:
    records: list[MixtureRecord]
    metadata: dict = field(default_factory=dict)

    def save(self, path) -> None:
        path = pathlib.Path(path)
        lines = [json.dumps({"record_type": "header", **self.metadata}, sort_keys=True)]
        for rec in self.records:
            lines.append(
                json.dumps(
                    {
                        "record_type": "mixture",
                        "id": rec.id,
                        "mixture_path": rec.mixture_path,
                        "ref_a_path": rec.ref_a_path,
                        "ref_b_path": rec.ref_b_path,
                        **_spec_to_dict(rec.spec),
                    },
                    sort_keys=True,
                )
            )
        path.write_text("\n".join(lines) + "\n")

    @staticmethod
    def load(path) -> "MixtureManifest":
        path = pathlib.Path(path)
        metadata = {}
        records = []
        for lineno, line in enumerate(path.read_text().splitlines(), start=1):
            if not line.strip():
                continue
            entry = json.loads(line)
            kind = entry.pop("record_type", None)
            if kind == "header":
                if entry.get("schema") != MANIFEST_SCHEMA:
                    raise ValueError(f"{path}:{lineno}: not a mixture manifest header")
                metadata = entry
            elif kind == "mixture":
                records.append(
                    MixtureRecord(
                        id=entry["id"],
                        mixture_path=entry["mixture_path"],
                        ref_a_path=entry["ref_a_path"],
                        ref_b_path=entry["ref_b_path"],
                        spec=_spec_from_dict(entry),
                    )
                )
            else:
                raise ValueError(f"{path}:{lineno}: unknown record_type {kind!r}")
        if not metadata:
            raise ValueError(f"{path}: missing manifest header line")
        return MixtureManifest(records, metadata)

    def resolve(self, relative_path: str, root) -> pathlib.Path:
        return pathlib.Path(root) / relative_path


def _spec_to_dict(spec: MixtureSpec) -> dict:
    return {
        "source_a_path": spec.source_a_path,
        "source_b_path": spec.source_b_path,
        "condition": spec.condition,
        "jitter_a": spec.jitter_a,
        "jitter_b": spec.jitter_b,
        "gain_a_db": spec.gain_a_db,
        "gain_b_db": spec.gain_b_db,
        "seed": spec.seed,
        "num_sources": spec.num_sources,
    }


def _spec_from_dict(entry: dict) -> MixtureSpec:
    return MixtureSpec(
        source_a_path=entry["source_a_path"],
        source_b_path=entry["source_b_path"],
        condition=entry["condition"],
        jitter_a=entry["jitter_a"],
        jitter_b=entry["jitter_b"],
        gain_a_db=entry["gain_a_db"],
        gain_b_db=entry["gain_b_db"],
        seed=entry["seed"],
        num_sources=entry.get("num_sources", 2),
    )


def mix(
    a: Waveform,
    b: Waveform,
    gain_a_db: float = 0.0,
    gain_b_db: float = 0.0,
    length_mode: str = "pad",
):
    """Scale two sources to a common reference level, apply per-source dB
    gains, and sum.

    Returns (mixture, ref_a, ref_b) where mixture = ref_a + ref_b exactly,
    sample for sample. The shorter source is zero-padded to the longer
    length (length_mode="pad", default) or both are truncated to the
    shorter (length_mode="truncate"). If the sum would clip, one scalar
    rescales all three outputs together.

    Level equalization uses each source's pre-padding extent, so the
    post-gain energy ratio of the refs equals gain_a_db - gain_b_db.
    """
    if a.sample_rate != b.sample_rate:
        raise SampleRateError(f"sample rates differ: {a.sample_rate} vs {b.sample_rate}")
    if length_mode not in ("pad", "truncate"):
        raise ValueError(f"length_mode must be 'pad' or 'truncate', got {length_mode!r}")

    xa, xb = a.samples, b.samples
    rms_a, rms_b = a.rms(), b.rms()
    if length_mode == "pad":
        n = max(len(xa), len(xb))
        xa = np.concatenate([xa, np.zeros(n - len(xa))])
        xb = np.concatenate([xb, np.zeros(n - len(xb))])
    else:
        n = min(len(xa), len(xb))
        xa, xb = xa[:n], xb[:n]

    scale_a = (REFERENCE_RMS / rms_a if rms_a > 0 else 0.0) * 10.0 ** (gain_a_db / 20.0)
    scale_b = (REFERENCE_RMS / rms_b if rms_b > 0 else 0.0) * 10.0 ** (gain_b_db / 20.0)
    if rms_a == 0:
        scale_a = 1.0  # silence passes through unscaled
    if rms_b == 0:
        scale_b = 1.0
    ra = xa * scale_a
    rb = xb * scale_b
    peak = float(np.max(np.abs(ra + rb))) if n else 0.0
    if peak > 0.99:
        renorm = 0.99 / peak
        ra *= renorm
        rb *= renorm
    mixture = ra + rb
    # re-derive ref_b from the rounded sum (sub-ulp change) so that
    # mixture - ref_a - ref_b is exactly zero at every sample
    rb = mixture - ra
    rate = a.sample_rate
    return Waveform(mixture, rate), Waveform(ra, rate), Waveform(rb, rate)


def scan_corpus(corpus_dir, speaker_pattern: str = DEFAULT_SPEAKER_PATTERN):
    """Map speaker id -> sorted list of utterance paths.

    Speaker identity comes from a named regex group applied to the file
    name; unreadable files are skipped with a warning.
    """
    corpus_dir = pathlib.Path(corpus_dir)
    if not corpus_dir.is_dir():
        raise CorpusError(f"corpus directory not found: {corpus_dir}")
    regex = re.compile(speaker_pattern)
    speakers: dict[str, list[pathlib.Path]] = {}
    for path in sorted(corpus_dir.rglob("*.wav")):
        match = regex.search(path.name)
        if not match:
            log.warning("skipping %s: file name does not match speaker pattern", path)
            continue
        if not probe_wav_header(path):
            log.warning("skipping unreadable WAV %s", path)
            continue
        speakers.setdefault(match.group("speaker"), []).append(path)
    if len(speakers) < 2:
        raise CorpusError(
            f"need utterances from at least 2 speakers, found {len(speakers)} in {corpus_dir}"
        )
    return speakers


def corpus_fingerprint(speakers: dict) -> str:
    """Stable content hash over the corpus files used for pairing."""
    digest = hashlib.sha256()
    for speaker in sorted(speakers):
        for path in speakers[speaker]:
            digest.update(speaker.encode())
            digest.update(path.name.encode())
            digest.update(path.read_bytes())
    return "sha256:" + digest.hexdigest()


def build_dataset(
    corpus_dir,
    condition: str,
    jitter: float,
    pairing_seed: int,
    count: int,
    out_dir,
    jitter_seed: int = 0,
    speaker_pattern: str = DEFAULT_SPEAKER_PATTERN,
    length_mode: str = "pad",
    f0_config: F0Config | None = None,
    sample_rate: int = CANONICAL_RATE,
) -> MixtureManifest:
    """Materialize `count` different-speaker mixtures under out_dir.

    condition: HH (both natural), II (both jittered), or HI (one side
    jittered; the side is randomized per mixture and the realized
    condition, HI or IH, is recorded). The H side always has jitter 0.

    For a fixed pairing_seed the pair, gain, and side draws are identical
    across jitter values and conditions, so swept datasets are matched
    sample for sample. Jitter profiles depend on (jitter_seed, utterance)
    only, so a swept J rescales one frozen draw per utterance.
    """
    requested = condition.upper()
    if requested not in ("HH", "HI", "II"):
        raise ValueError(f"condition must be HH, HI, or II, got {condition!r}")
    if not 0.0 <= jitter < 1.0:
        raise ValueError(f"jitter must be in [0, 1), got {jitter}")
    # J = 0 under II/HI is the natural-speech baseline of a sweep
    out_dir = pathlib.Path(out_dir)
    speakers = scan_corpus(corpus_dir, speaker_pattern)
    speaker_ids = sorted(speakers)
    fingerprint = corpus_fingerprint(speakers)
    corpus_root = pathlib.Path(corpus_dir)

    rng = derive_rng(pairing_seed, "pairing")
    jitter_cache: dict[tuple[str, float], Waveform] = {}

    def load_side(path: pathlib.Path, side_jitter: float) -> Waveform:
        rel = path.relative_to(corpus_root).as_posix()
        key = (rel, side_jitter)
        if key not in jitter_cache:
            wav = read_wav(path, target_rate=sample_rate)
            if side_jitter > 0.0:
                utt_seed = int(derive_rng(jitter_seed, "utterance", rel).integers(2**63))
                wav = jitter_utterance(wav, side_jitter, utt_seed, f0_config).waveform
            jitter_cache[key] = wav
        return jitter_cache[key]

    for sub in ("mix", "ref_a", "ref_b"):
        (out_dir / "wav" / sub).mkdir(parents=True, exist_ok=True)

    records = []
    for i in range(count):
        # all draws happen unconditionally to keep the stream aligned
        # across conditions and J values
        spk_a_idx, spk_b_idx = rng.choice(len(speaker_ids), size=2, replace=False)
        spk_a, spk_b = speaker_ids[spk_a_idx], speaker_ids[spk_b_idx]
        utt_a = speakers[spk_a][rng.integers(len(speakers[spk_a]))]
        utt_b = speakers[spk_b][rng.integers(len(speakers[spk_b]))]
        offset_db = float(rng.uniform(-GAIN_RANGE_DB, GAIN_RANGE_DB))
        jitter_first = bool(rng.integers(2))
        mix_seed = int(rng.integers(2**63))

        if requested == "HH":
            realized, ja, jb = "HH", 0.0, 0.0
        elif requested == "II":
            realized, ja, jb = "II", jitter, jitter
        else:
            realized = "IH" if jitter_first else "HI"
            ja = jitter if realized[0] == "I" else 0.0
            jb = jitter if realized[1] == "I" else 0.0

        wav_a = load_side(utt_a, ja)
        wav_b = load_side(utt_b, jb)
        mixture, ref_a, ref_b = mix(
            wav_a, wav_b, offset_db / 2.0, -offset_db / 2.0, length_mode
        )
        mix_id = f"m{i:04d}"
        paths = {
            "mixture_path": f"wav/mix/{mix_id}.wav",
            "ref_a_path": f"wav/ref_a/{mix_id}.wav",
            "ref_b_path": f"wav/ref_b/{mix_id}.wav",
        }
        write_wav(out_dir / paths["mixture_path"], mixture)
        write_wav(out_dir / paths["ref_a_path"], ref_a)
        write_wav(out_dir / paths["ref_b_path"], ref_b)
        records.append(
            MixtureRecord(
                id=mix_id,
                spec=MixtureSpec(
                    source_a_path=utt_a.relative_to(corpus_root).as_posix(),
                    source_b_path=utt_b.relative_to(corpus_root).as_posix(),
                    condition=realized,
                    jitter_a=ja,
                    jitter_b=jb,
                    gain_a_db=offset_db / 2.0,
                    gain_b_db=-offset_db / 2.0,
                    seed=mix_seed,
                ),
                **paths,
            )
        )

    manifest = MixtureManifest(
        records,
        metadata={
            "schema": MANIFEST_SCHEMA,
            "schema_version": MANIFEST_VERSION,
            "toolkit_version": __version__,
            "sample_rate": sample_rate,
            "condition": requested,
            "jitter": jitter if requested != "HH" else 0.0,
            "count": count,
            "pairing_seed": int(pairing_seed),
            "jitter_seed": int(jitter_seed),
            "gain_range_db": GAIN_RANGE_DB,
            "length_mode": length_mode,
            "speaker_pattern": speaker_pattern,
            "corpus_fingerprint": fingerprint,
        },
    )
    manifest.save(out_dir / MANIFEST_NAME)
    return manifest
