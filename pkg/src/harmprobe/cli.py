"""Command-line front end: stimuli, datasets, separation, scoring, sweeps.

Exit codes: 0 success, 1 usage error, 2 partial data failure (some
records missing/failed), 3 environment failure (unreadable corpus, bad
I/O). Every command is deterministic given its --seed flags, and every
JSON artifact embeds a provenance block (seeds, config, versions; no
timestamps, so reruns are byte-identical).
"""

import hashlib
import json
import os
import pathlib
import sys

import click

from . import __version__
from .core import CANONICAL_RATE, read_wav, stft, write_wav
from .metrics import eval_manifest, pit_eval
from .mixtures import (
    MixtureManifest,
    build_dataset,
    corpus_fingerprint,
    mix as mix_sources,
    scan_corpus,
)
from .render import line_plot_png, spectrogram_csv, spectrogram_png
from .separators import (
    HarmonicCombConfig,
    SeparatorSpec,
    harmonic_comb_separate,
    oracle_irm,
    run_external,
    separate_manifest,
)
from .speech import jitter_directory, jitter_utterance
from .tones import Scenario, ScenarioKind, ScenarioParams, build_scenario
from .toys import make_toy_corpus

click.UsageError.exit_code = 1  # spec contract: usage errors exit 1, not click's 2


class PartialFailure(click.ClickException):
    exit_code = 2


class EnvFailure(click.ClickException):
    exit_code = 3


def _provenance(**config) -> dict:
    return {"toolkit": "harmprobe", "toolkit_version": __version__, "config": config}


def config_file_option(fn):
    """--config FILE: JSON mapping of flag names (underscored) to values,
    applied as defaults before explicit flags."""

    def callback(ctx, param, value):
        if value:
            try:
                data = json.loads(pathlib.Path(value).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise click.UsageError(f"cannot read config file {value}: {exc}")
            if not isinstance(data, dict):
                raise click.UsageError(f"config file {value} must hold a JSON object")
            ctx.default_map = {**(ctx.default_map or {}), **data}
        return value

    return click.option(
        "--config", type=click.Path(exists=True), is_eager=True, expose_value=False,
        callback=callback, help="JSON file providing defaults for this command's flags.",
    )(fn)


def _parse_floats(value: str) -> list:
    try:
        return [float(v) for v in str(value).split(",") if v.strip() != ""]
    except ValueError as exc:
        raise click.UsageError(f"expected comma-separated numbers, got {value!r}") from exc


def _parse_pair(value: str, name: str) -> list:
    pair = _parse_floats(value)
    if len(pair) == 1:
        pair = pair * 2  # one value applies to both complexes
    if len(pair) != 2:
        raise click.UsageError(f"{name} needs one or two comma-separated values")
    return pair


def _echo_plan(dry_run: bool, lines) -> bool:
    for line in lines:
        click.echo(("PLAN " if dry_run else "") + line)
    return dry_run


@click.group()
@click.version_option(version=__version__, prog_name="harmprobe")
def main():
    """Probe source separators with harmonic vs frequency-jittered stimuli."""


@main.command()
@click.argument("kind", type=click.Choice([k.value for k in ScenarioKind]))
@click.option("-o", "--out", required=True, type=click.Path(path_type=pathlib.Path))
@click.option("--f0", default="110,210", help="F0 pair in Hz, comma separated.")
@click.option("--jitter", default="0,0", help="Jitter bounds for the two complexes.")
@click.option("--seed", default=0, type=int, show_default=True)
@click.option("--burst", default=0.5, type=float, show_default=True)
@click.option("--num-bursts", default=4, type=int, show_default=True)
@click.option("--mode", default="inharmonic", type=click.Choice(["inharmonic", "harmonic"]),
              help="Overlap scenario variant.", show_default=True)
@click.option("--speech", type=click.Path(exists=True, path_type=pathlib.Path),
              help="Speech WAV (required for the speech-tone scenario).")
@click.option("--separator", type=click.Choice(["oracle-irm", "harmonic-comb"]),
              help="Also run a reference separator and save its estimates.")
@config_file_option
@click.option("--dry-run", is_flag=True, help="Print the plan without writing files.")
def scenario(kind, out, f0, jitter, seed, burst, num_bursts, mode, speech, separator, dry_run):
    """Build a probe stimulus: two sources, mixture, spectrogram image + CSV."""
    f0_pair = _parse_pair(f0, "--f0")
    jitter_pair = _parse_pair(jitter, "--jitter")
    params = ScenarioParams(
        f0_a=f0_pair[0], f0_b=f0_pair[1],
        jitter_a=jitter_pair[0], jitter_b=jitter_pair[1],
        burst=burst, num_bursts=num_bursts, overlap_mode=mode,
        speech=read_wav(speech, target_rate=CANONICAL_RATE) if speech else None,
    )
    if _echo_plan(dry_run, [f"scenario {kind} -> {out} (seed {seed})"]):
        return
    try:
        result = build_scenario(ScenarioKind(kind), params, seed)
    except ValueError as exc:
        raise click.UsageError(str(exc))
    out.mkdir(parents=True, exist_ok=True)
    _write_scenario(result, out, seed, separator)
    click.echo(f"wrote scenario files to {out}")


def _write_scenario(result: Scenario, out: pathlib.Path, seed: int, separator: str | None):
    write_wav(out / "source_a.wav", result.source_a)
    write_wav(out / "source_b.wav", result.source_b)
    write_wav(out / "mixture.wav", result.mixture)
    spec = stft(result.mixture)
    spectrogram_png(spec, out / "mixture.png")
    spectrogram_csv(spec, out / "mixture.csv")
    meta = {"provenance": _provenance(seed=seed), **result.info}
    if separator:
        if separator == "oracle-irm":
            est_a, est_b = oracle_irm(result.mixture, (result.source_a, result.source_b))
        else:
            est_a, est_b = harmonic_comb_separate(result.mixture)
        write_wav(out / "estimate_1.wav", est_a)
        write_wav(out / "estimate_2.wav", est_b)
        for name, est in (("estimate_1", est_a), ("estimate_2", est_b)):
            spectrogram_png(stft(est), out / f"{name}.png")
        score = pit_eval([est_a, est_b], [result.source_a, result.source_b],
                         mixture=result.mixture)
        meta["separator"] = separator
        meta["si_snri"] = score.si_snri
        meta["sdri"] = score.sdri
    (out / "scenario.json").write_text(json.dumps(meta, indent=2, sort_keys=True))


@main.command()
@click.argument("input_path", type=click.Path(exists=True, path_type=pathlib.Path))
@click.argument("output_path", type=click.Path(path_type=pathlib.Path))
@click.option("-J", "--jitter", "bound", required=True, type=float,
              help="Jitter bound as a fraction of F0, in [0, 1).")
@click.option("--seed", default=0, type=int, show_default=True)
@click.option("--jobs", default=1, type=int, show_default=True)
@config_file_option
@click.option("--dry-run", is_flag=True)
def jitter(input_path, output_path, bound, seed, jobs, dry_run):
    """Jitter one WAV, or every WAV under a directory (mirrored tree)."""
    if _echo_plan(dry_run, [f"jitter J={bound} seed={seed}: {input_path} -> {output_path}"]):
        return
    if input_path.is_dir():
        metas = jitter_directory(input_path, output_path, bound, seed, jobs=jobs)
        click.echo(f"jittered {len(metas)} files into {output_path}")
        return
    wav = read_wav(input_path, target_rate=CANONICAL_RATE)
    result = jitter_utterance(wav, bound, seed)
    output_path.parent.mkdir(parents=True, exist_ok=True)
    write_wav(output_path, result.waveform)
    sidecar = {
        "provenance": _provenance(jitter_bound=bound, seed=seed),
        "offsets": result.profile.offsets.tolist(),
        "max_harmonics": result.model.max_harmonics,
        "median_f0": result.model.f0_track.median_voiced_f0(),
    }
    output_path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True))
    click.echo(f"wrote {output_path}")


@main.command("mix")
@click.argument("source_a", type=click.Path(exists=True, path_type=pathlib.Path))
@click.argument("source_b", type=click.Path(exists=True, path_type=pathlib.Path))
@click.option("-o", "--out", required=True, type=click.Path(path_type=pathlib.Path))
@click.option("--gain-a", default=0.0, type=float, show_default=True)
@click.option("--gain-b", default=0.0, type=float, show_default=True)
@click.option("--truncate", is_flag=True, help="Truncate to the shorter source instead of padding.")
@config_file_option
@click.option("--dry-run", is_flag=True)
def mix_cmd(source_a, source_b, out, gain_a, gain_b, truncate, dry_run):
    """Mix two WAVs into mixture + post-gain reference pair."""
    if _echo_plan(dry_run, [f"mix {source_a} + {source_b} -> {out}"]):
        return
    a = read_wav(source_a, target_rate=CANONICAL_RATE)
    b = read_wav(source_b, target_rate=CANONICAL_RATE)
    mixture, ref_a, ref_b = mix_sources(
        a, b, gain_a, gain_b, length_mode="truncate" if truncate else "pad"
    )
    out.mkdir(parents=True, exist_ok=True)
    write_wav(out / "mixture.wav", mixture)
    write_wav(out / "ref_a.wav", ref_a)
    write_wav(out / "ref_b.wav", ref_b)
    meta = _provenance(gain_a_db=gain_a, gain_b_db=gain_b,
                       source_a=str(source_a), source_b=str(source_b))
    (out / "mix.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    click.echo(f"wrote mixture files to {out}")


@main.command("build-dataset")
@click.argument("corpus", required=False,
                type=click.Path(exists=True, file_okay=False, path_type=pathlib.Path))
@click.option("-o", "--out", required=True, type=click.Path(path_type=pathlib.Path))
@click.option("--condition", required=True, type=click.Choice(["HH", "HI", "II"]))
@click.option("-J", "--jitter", "bound", default=0.0, type=float, show_default=True)
@click.option("--count", default=20, type=int, show_default=True)
@click.option("--pairing-seed", default=0, type=int, show_default=True)
@click.option("--jitter-seed", default=0, type=int, show_default=True)
@click.option("--speaker-pattern", default=r"^(?P<speaker>[^_]+)_", show_default=True,
              help="Regex with a named 'speaker' group applied to file names.")
@click.option("--truncate", is_flag=True)
@config_file_option
@click.option("--dry-run", is_flag=True)
def build_dataset_cmd(corpus, out, condition, bound, count, pairing_seed, jitter_seed,
                      speaker_pattern, truncate, dry_run):
    """Materialize a two-source mixture dataset + manifest from a corpus.

    CORPUS defaults to the HARMPROBE_CORPUS environment variable.
    """
    corpus = corpus or os.environ.get("HARMPROBE_CORPUS")
    if not corpus:
        raise click.UsageError("no corpus given and HARMPROBE_CORPUS is not set")
    plan = [f"build-dataset {condition} J={bound} count={count} {corpus} -> {out}"]
    if _echo_plan(dry_run, plan):
        return
    try:
        manifest = build_dataset(
            corpus, condition, bound, pairing_seed, count, out,
            jitter_seed=jitter_seed, speaker_pattern=speaker_pattern,
            length_mode="truncate" if truncate else "pad",
        )
    except ValueError as exc:
        raise click.UsageError(str(exc))
    except OSError as exc:
        raise EnvFailure(str(exc))
    click.echo(f"wrote {len(manifest.records)} mixtures to {out}")


@main.command()
@click.argument("manifest_path", type=click.Path(exists=True, path_type=pathlib.Path))
@click.option("-o", "--out", required=True, type=click.Path(path_type=pathlib.Path))
@click.option("--separator", required=True,
              type=click.Choice(["oracle-irm", "harmonic-comb", "external"]))
@click.option("--external-cmd", help="Command template with {input_wav} and {output_dir}.")
@click.option("--jobs", default=1, type=int, show_default=True)
@click.option("--comb-window", default=0.256, type=float, show_default=True)
@config_file_option
@click.option("--dry-run", is_flag=True)
def separate(manifest_path, out, separator, external_cmd, jobs, comb_window, dry_run):
    """Run a separator over every mixture in a manifest."""
    if _echo_plan(dry_run, [f"separate {manifest_path} with {separator} -> {out}"]):
        return
    manifest = _load_manifest(manifest_path)
    root = manifest_path.parent
    if separator == "external":
        if not external_cmd:
            raise click.UsageError("--external-cmd is required with --separator external")
        spec = SeparatorSpec(kind="external", external_command=external_cmd)
        result = run_external(spec, manifest, root, out, jobs=jobs)
        summary = {
            "provenance": _provenance(separator=separator, external_cmd=external_cmd),
            "succeeded": result.succeeded,
            "failures": result.failures,
        }
        (pathlib.Path(out) / "run.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
        if result.failures:
            raise PartialFailure(
                f"{len(result.failures)} of {len(manifest.records)} records failed"
            )
    else:
        failures = separate_manifest(
            separator, manifest, root, out,
            comb_config=HarmonicCombConfig(window=comb_window), jobs=jobs,
        )
        if failures:
            raise PartialFailure(
                f"{len(failures)} of {len(manifest.records)} records failed"
            )
    click.echo(f"estimates written to {out}")


def _load_manifest(manifest_path: pathlib.Path) -> MixtureManifest:
    try:
        return MixtureManifest.load(manifest_path)
    except (OSError, ValueError) as exc:
        raise EnvFailure(f"cannot read manifest {manifest_path}: {exc}")


@main.command("eval")
@click.argument("manifest_path", type=click.Path(exists=True, path_type=pathlib.Path))
@click.argument("estimates_dir", type=click.Path(exists=True, file_okay=False,
                                                 path_type=pathlib.Path))
@click.option("-o", "--out", type=click.Path(path_type=pathlib.Path),
              help="Report file (line-delimited JSON).")
@config_file_option
@click.option("--dry-run", is_flag=True)
def eval_cmd(manifest_path, estimates_dir, out, dry_run):
    """Score estimates against a manifest; prints a table, exits 2 if any
    record is missing."""
    if _echo_plan(dry_run, [f"eval {manifest_path} against {estimates_dir}"]):
        return
    manifest = _load_manifest(manifest_path)
    report = eval_manifest(manifest, estimates_dir, manifest_path.parent)
    click.echo(report.console_table())
    if out:
        report.metadata["provenance"] = _provenance(manifest=str(manifest_path))
        report.save(out)
        click.echo(f"report written to {out}")
    if report.missing:
        raise PartialFailure(f"{len(report.missing)} records not scored")


@main.command()
@click.argument("corpus", required=False,
                type=click.Path(exists=True, file_okay=False, path_type=pathlib.Path))
@click.option("-o", "--out", required=True, type=click.Path(path_type=pathlib.Path))
@click.option("--conditions", default="HH,II", show_default=True)
@click.option("--jitters", default="0.05,0.1,0.2", show_default=True,
              help="J values for the sweep (ignored for HH).")
@click.option("--separator", default="harmonic-comb", show_default=True,
              type=click.Choice(["oracle-irm", "harmonic-comb", "external"]))
@click.option("--external-cmd")
@click.option("--count", default=10, type=int, show_default=True)
@click.option("--pairing-seed", default=0, type=int, show_default=True)
@click.option("--jitter-seed", default=0, type=int, show_default=True)
@click.option("--speaker-pattern", default=r"^(?P<speaker>[^_]+)_", show_default=True)
@click.option("--jobs", default=1, type=int, show_default=True)
@click.option("--plot", is_flag=True, help="Also write an SDRi-vs-J line plot PNG.")
@config_file_option
@click.option("--dry-run", is_flag=True)
def sweep(corpus, out, conditions, jitters, separator, external_cmd, count,
          pairing_seed, jitter_seed, speaker_pattern, jobs, plot, dry_run):
    """Matched-dataset sweep over J and conditions; one report row per cell.

    Datasets are cached under OUT keyed by their build config, so sweeps
    rerun cheaply and deterministically.
    """
    corpus = corpus or os.environ.get("HARMPROBE_CORPUS")
    if not corpus:
        raise click.UsageError("no corpus given and HARMPROBE_CORPUS is not set")
    condition_list = [c.strip().upper() for c in conditions.split(",") if c.strip()]
    for c in condition_list:
        if c not in ("HH", "HI", "II"):
            raise click.UsageError(f"unknown condition {c!r}")
    jitter_list = _parse_floats(jitters)
    cells = []
    for cond in condition_list:
        values = [0.0] if cond == "HH" else jitter_list
        cells.extend((cond, j) for j in values)
    if _echo_plan(dry_run, [f"sweep cell condition={c} J={j} separator={separator}"
                            for c, j in cells]):
        return

    out = pathlib.Path(out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        fingerprint = corpus_fingerprint(scan_corpus(corpus, speaker_pattern))
    except ValueError as exc:
        raise click.UsageError(str(exc))
    rows = []
    for cond, j in sorted(cells, key=lambda cj: (cj[0], cj[1])):
        row = {"J": j, "condition": cond, "separator": separator, "status": "ok"}
        try:
            config = {
                "condition": cond, "jitter": j, "count": count,
                "pairing_seed": pairing_seed, "jitter_seed": jitter_seed,
                "speaker_pattern": speaker_pattern, "corpus": fingerprint,
            }
            key = hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()[:12]
            ds_dir = out / "datasets" / f"{cond}_J{j:g}_{key}"
            manifest_path = ds_dir / "manifest.jsonl"
            if manifest_path.exists():
                manifest = MixtureManifest.load(manifest_path)
            else:
                manifest = build_dataset(
                    corpus, cond, j, pairing_seed, count, ds_dir,
                    jitter_seed=jitter_seed, speaker_pattern=speaker_pattern,
                )
            est_dir = out / "estimates" / f"{cond}_J{j:g}_{key}_{separator}"
            if separator == "external":
                if not external_cmd:
                    raise click.UsageError("--external-cmd is required with external separator")
                spec = SeparatorSpec(kind="external", external_command=external_cmd)
                result = run_external(spec, manifest, ds_dir, est_dir, jobs=jobs)
                if result.failures:
                    row["status"] = f"partial ({len(result.failures)} failed)"
            else:
                failures = separate_manifest(separator, manifest, ds_dir, est_dir, jobs=jobs)
                if failures:
                    row["status"] = f"partial ({len(failures)} failed)"
            report = eval_manifest(manifest, est_dir, ds_dir)
            summary = report.summary
            row.update(
                mean_sdri=summary.get("mean_sdri"),
                mean_si_snri=summary.get("mean_si_snri"),
                n=summary.get("n_scored", 0),
            )
            if report.missing and row["status"] == "ok":
                row["status"] = f"partial ({len(report.missing)} missing)"
        except click.UsageError:
            raise
        except Exception as exc:  # keep sweeping; mark the cell
            row["status"] = f"failed: {exc}"
        rows.append(row)

    header = {
        "record_type": "header", "schema": "harmprobe/sweep-report", "schema_version": 1,
        **_provenance(conditions=condition_list, jitters=jitter_list, separator=separator,
                      count=count, pairing_seed=pairing_seed, jitter_seed=jitter_seed),
    }
    lines = [json.dumps(header, sort_keys=True)]
    lines += [json.dumps({"record_type": "cell", **row}, sort_keys=True) for row in rows]
    (out / "sweep.jsonl").write_text("\n".join(lines) + "\n")

    click.echo(f"{'J':>6} {'cond':>5} {'mean sdri':>10} {'mean si-snri':>13} {'n':>4}  status")
    for row in rows:
        sdri_s = f"{row['mean_sdri']:.2f}" if row.get("mean_sdri") is not None else "-"
        snri_s = f"{row['mean_si_snri']:.2f}" if row.get("mean_si_snri") is not None else "-"
        click.echo(f"{row['J']:>6g} {row['condition']:>5} {sdri_s:>10} {snri_s:>13} "
                   f"{row.get('n', 0):>4}  {row['status']}")
    if plot:
        series = {}
        for cond in condition_list:
            pts = [(r["J"], r["mean_sdri"]) for r in rows
                   if r["condition"] == cond and r.get("mean_sdri") is not None]
            if pts:
                series[cond] = ([p[0] for p in pts], [p[1] for p in pts])
        line_plot_png(out / "sweep.png", series)
        click.echo(f"plot written to {out / 'sweep.png'}")
    if any(row["status"] != "ok" for row in rows):
        raise PartialFailure("some sweep cells are incomplete (see report)")
    click.echo(f"sweep report written to {out / 'sweep.jsonl'}")


@main.command("toy-corpus")
@click.option("-o", "--out", required=True, type=click.Path(path_type=pathlib.Path))
@click.option("--speakers", default=4, type=int, show_default=True)
@click.option("--utterances", default=5, type=int, show_default=True)
@click.option("--seed", default=0, type=int, show_default=True)
@config_file_option
@click.option("--dry-run", is_flag=True)
def toy_corpus(out, speakers, utterances, seed, dry_run):
    """Generate a synthetic speech-proxy corpus (for tests and demos)."""
    if _echo_plan(dry_run, [f"toy-corpus {speakers}x{utterances} seed={seed} -> {out}"]):
        return
    paths = make_toy_corpus(out, speakers, utterances, seed)
    click.echo(f"wrote {len(paths)} utterances to {out}")


if __name__ == "__main__":
    sys.exit(main())
