"""Scale-invariant SNR, SDR improvement, and permutation-invariant scoring.

SDR here is the scalar-projection variant (identical to SI-SNR): the
estimate is projected onto the reference, and the ratio of projected to
residual energy is reported in dB. No FIR allowed-distortion filter is
fitted; reports label the metric accordingly. Improvements (SI-SNRi,
SDRi) are measured against using the unprocessed mixture as the estimate
for every source.
"""

import itertools
import json
import pathlib
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .core import Waveform, read_wav
from .mixtures import MixtureManifest

SCORE_CAP_DB = 80.0  # degenerate zero-error (or zero-projection) cases
REPORT_SCHEMA = "harmprobe/eval-report"
REPORT_VERSION = 1
ESTIMATE_SUFFIXES = ("_src1.wav", "_src2.wav")


class MetricError(ValueError):
    """Invalid metric inputs (length mismatch, zero reference, ...)."""


def si_snr(est: Waveform | np.ndarray, ref: Waveform | np.ndarray) -> float:
    """Scale-invariant signal-to-noise ratio in dB.

    Both signals are made zero-mean, the estimate is decomposed into its
    projection onto the reference plus a residual, and the energy ratio is
    returned, capped at +/-80 dB to keep aggregates finite.
    """
    e = _as_samples(est)
    r = _as_samples(ref)
    if len(e) != len(r):
        raise MetricError(f"length mismatch: estimate {len(e)} vs reference {len(r)}")
    if len(r) == 0 or not np.any(r):
        raise MetricError("reference signal is identically zero")
    e = e - e.mean()
    r = r - r.mean()
    target = (np.dot(e, r) / np.dot(r, r)) * r
    err = e - target
    p_target = np.dot(target, target)
    p_err = np.dot(err, err)
    if p_err <= p_target * 1e-16 or p_err == 0.0:
        return SCORE_CAP_DB
    if p_target <= p_err * 1e-16 or p_target == 0.0:
        return -SCORE_CAP_DB
    return float(np.clip(10.0 * np.log10(p_target / p_err), -SCORE_CAP_DB, SCORE_CAP_DB))


def sdr(est, ref) -> float:
    """Signal-to-distortion ratio under optimal scalar projection.

    Identical to si_snr by construction; kept as a separate name so call
    sites say which published quantity they report.
    """
    return si_snr(est, ref)


@dataclass(frozen=True)
class SeparationScore:
    """Best-permutation scores for one two-source separation."""

    per_source_si_snr: tuple
    per_source_sdr: tuple
    chosen_permutation: tuple  # estimate index assigned to each reference
    si_snri: float | None = None  # vs mixture-as-estimate baseline
    sdri: float | None = None

    @property
    def mean_si_snr(self) -> float:
        return float(np.mean(self.per_source_si_snr))

    @property
    def mean_sdr(self) -> float:
        return float(np.mean(self.per_source_sdr))


def pit_eval(estimates, references, metric=si_snr, mixture=None) -> SeparationScore:
    """Score estimates against references under the best permutation.

    Evaluates `metric` for every assignment of estimates to references,
    keeps the permutation maximizing the mean, and reports per-source
    values under it. With `mixture` given, also reports improvements over
    scoring the raw mixture as the estimate for every reference.
    """
    if len(estimates) != len(references):
        raise MetricError(
            f"count mismatch: {len(estimates)} estimates vs {len(references)} references"
        )
    n = len(references)
    pair = np.empty((n, n))
    for i, est in enumerate(estimates):
        for j, ref in enumerate(references):
            pair[i, j] = metric(est, ref)
    best_perm = None
    best_mean = -np.inf
    for perm in itertools.permutations(range(n)):
        mean = float(np.mean([pair[perm[j], j] for j in range(n)]))
        if mean > best_mean:
            best_mean = mean
            best_perm = perm
    per_source = tuple(float(pair[best_perm[j], j]) for j in range(n))

    si_snri = sdri_val = None
    if mixture is not None:
        baseline = float(np.mean([metric(mixture, ref) for ref in references]))
        si_snri = best_mean - baseline
        sdri_val = si_snri  # sdr == si_snr under scalar projection
    return SeparationScore(
        per_source_si_snr=per_source,
        per_source_sdr=per_source,
        chosen_permutation=best_perm,
        si_snri=si_snri,
        sdri=sdri_val,
    )


def sdri(estimates, references, mixture) -> float:
    """Best-permutation mean SDR improvement over the mixture baseline."""
    return pit_eval(estimates, references, metric=sdr, mixture=mixture).sdri


@dataclass
class EvalReport:
    scores: dict  # id -> SeparationScore
    missing: dict  # id -> reason
    metadata: dict = field(default_factory=dict)

    @property
    def summary(self) -> dict:
        vals = {
            "si_snri": [s.si_snri for s in self.scores.values()],
            "sdri": [s.sdri for s in self.scores.values()],
        }
        out = {"n_scored": len(self.scores), "n_missing": len(self.missing)}
        for name, series in vals.items():
            if series:
                arr = np.asarray(series)
                out[f"mean_{name}"] = float(arr.mean())
                out[f"median_{name}"] = float(np.median(arr))
                out[f"std_{name}"] = float(arr.std())
        return out

    def save(self, path) -> None:
        lines = [
            json.dumps(
                {"record_type": "header", "schema": REPORT_SCHEMA,
                 "schema_version": REPORT_VERSION, "toolkit_version": __version__,
                 **self.metadata},
                sort_keys=True,
            )
        ]
        for mix_id in sorted(self.scores):
            s = self.scores[mix_id]
            lines.append(
                json.dumps(
                    {
                        "record_type": "score",
                        "id": mix_id,
                        "si_snr": list(s.per_source_si_snr),
                        "sdr": list(s.per_source_sdr),
                        "permutation": list(s.chosen_permutation),
                        "si_snri": s.si_snri,
                        "sdri": s.sdri,
                    },
                    sort_keys=True,
                )
            )
        for mix_id in sorted(self.missing):
            lines.append(
                json.dumps(
                    {"record_type": "missing", "id": mix_id, "reason": self.missing[mix_id]},
                    sort_keys=True,
                )
            )
        lines.append(json.dumps({"record_type": "summary", **self.summary}, sort_keys=True))
        pathlib.Path(path).write_text("\n".join(lines) + "\n")

    def console_table(self) -> str:
        rows = [f"{'id':<8} {'si-snri':>9} {'sdri':>9} {'perm':>6}"]
        for mix_id in sorted(self.scores):
            s = self.scores[mix_id]
            perm = "".join(str(p) for p in s.chosen_permutation)
            rows.append(f"{mix_id:<8} {s.si_snri:>9.2f} {s.sdri:>9.2f} {perm:>6}")
        for mix_id in sorted(self.missing):
            rows.append(f"{mix_id:<8} {'MISSING':>9}  ({self.missing[mix_id]})")
        summary = self.summary
        if summary.get("n_scored"):
            rows.append(
                f"{'mean':<8} {summary['mean_si_snri']:>9.2f} {summary['mean_sdri']:>9.2f}"
            )
        rows.append(f"scored {summary['n_scored']}, missing {summary['n_missing']}")
        return "\n".join(rows)


def eval_manifest(manifest: MixtureManifest, estimates_dir, manifest_root) -> EvalReport:
    """Score every manifest record against `<id>_src{1,2}.wav` estimates.

    Records with missing or unreadable estimates are flagged and excluded
    from the aggregates; callers decide the exit status from
    report.missing.
    """
    estimates_dir = pathlib.Path(estimates_dir)
    root = pathlib.Path(manifest_root)
    rate = manifest.metadata.get("sample_rate")
    scores: dict = {}
    missing: dict = {}
    for rec in manifest.records:
        try:
            est_paths = [estimates_dir / f"{rec.id}{suffix}" for suffix in ESTIMATE_SUFFIXES]
            absent = [p.name for p in est_paths if not p.exists()]
            if absent:
                raise FileNotFoundError(f"estimate file not found: {', '.join(absent)}")
            mixture = read_wav(root / rec.mixture_path, target_rate=rate)
            refs = [
                read_wav(root / rec.ref_a_path, target_rate=rate),
                read_wav(root / rec.ref_b_path, target_rate=rate),
            ]
            ests = [read_wav(p, target_rate=rate) for p in est_paths]
            for est in ests:
                if len(est) != len(mixture):
                    raise MetricError(
                        f"estimate length {len(est)} != mixture length {len(mixture)}"
                    )
            scores[rec.id] = pit_eval(ests, refs, mixture=mixture)
        except Exception as exc:
            missing[rec.id] = str(exc)
    return EvalReport(
        scores,
        missing,
        metadata={"estimates_dir": str(estimates_dir), "n_records": len(manifest.records)},
    )


def _as_samples(signal) -> np.ndarray:
    if isinstance(signal, Waveform):
        return signal.samples
    return np.asarray(signal, dtype=np.float64)
