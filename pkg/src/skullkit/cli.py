"""Command-line entry point orchestrating the toolkit pipelines.

Every randomized subcommand takes an explicit seed (default 0) and records
it, together with the full parameter set, in a JSON sidecar next to each
output artifact. Artifacts themselves contain no timestamps, so identical
invocations produce byte-identical outputs.
"""

from __future__ import annotations

import csv
import datetime
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click
import numpy as np

from . import artisynth, fixtures, memaudit, radiometrics, tsne, vtt
from . import fid as fid_mod
from .radiometrics import MetricDistribution, ResolutionSpec
from .slicecore import (ManifestEntry, Provenance, SliceFormat, load_dataset,
                        load_volume, read_manifest, save_slice, select_slices,
                        threshold_mask, apply_mask, write_manifest)


def _sidecar(artifact: Path, command: str, params: dict, seed: int | None) -> None:
    meta = {
        "command": command,
        "params": {k: v for k, v in params.items() if v is not None},
        "seed": seed,
        "created_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    Path(str(artifact) + ".meta.json").write_text(json.dumps(meta, indent=2) + "\n")


def _resolve_manifest(path: str) -> Path:
    p = Path(path)
    if p.is_dir():
        p = p / "manifest.json"
    if not p.exists():
        raise click.ClickException(f"manifest not found: {p}")
    return p


def _fail_on(exc_types, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except exc_types as exc:
        raise click.ClickException(str(exc))


@click.group()
def main() -> None:
    """Skull-CT segment toolkit: metrics, synthesis, embeddings, audits,
    and the visual Turing test service."""


# ---------------------------------------------------------------------------
# ingest
# ---------------------------------------------------------------------------

@main.command()
@click.option("--volume", required=True, type=click.Path(exists=True), help="3-D NPY stack")
@click.option("--out", required=True, type=click.Path(), envvar="SKULLKIT_OUT")
@click.option("--step", default=5, show_default=True)
@click.option("--spacing-mm", default=0.625, show_default=True)
@click.option("--mm-per-px", default=0.45, show_default=True)
@click.option("--mask/--no-mask", default=True, show_default=True,
              help="zero out pixels at or below the background floor")
@click.option("--floor", default=10.0, show_default=True)
@click.option("--provenance", default="real", show_default=True,
              type=click.Choice([p.value for p in Provenance]))
def ingest(volume, out, step, spacing_mm, mm_per_px, mask, floor, provenance):
    """Slice a volume into 128x128 segments and write a dataset manifest."""
    vol = _fail_on((ValueError,), load_volume, volume, spacing_mm, mm_per_px)
    slices = _fail_on((ValueError,), select_slices, vol, step,
                      Path(volume).stem, Provenance(provenance))
    if mask:
        slices = [apply_mask(s, threshold_mask(s, floor)) for s in slices]
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for s in slices:
        save_slice(s, out_dir / f"{s.id}.npy", SliceFormat.NPY_F32)
        entries.append(ManifestEntry(id=s.id, path=f"{s.id}.npy", provenance=s.provenance))
    manifest = out_dir / "manifest.json"
    write_manifest(entries, manifest)
    _sidecar(manifest, "ingest", {"volume": volume, "step": step,
                                  "spacing_mm": spacing_mm, "mm_per_px": mm_per_px,
                                  "mask": mask, "floor": floor,
                                  "provenance": provenance}, seed=None)
    click.echo(f"wrote {len(entries)} slices to {out_dir}")


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

@main.command()
@click.option("--manifest", "--in", "manifest", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path(), envvar="SKULLKIT_OUT",
              help="per-slice CSV")
@click.option("--dist-out", type=click.Path(), help="distribution JSON")
@click.option("--mm-per-px", default=0.45, show_default=True)
@click.option("--floor", default=10.0, show_default=True)
@click.option("--threads", default=os.cpu_count() or 1, show_default="logical cores")
def metrics(manifest, out, dist_out, mm_per_px, floor, threads):
    """Compute the radiological metric triple for every slice in a dataset."""
    dataset = _fail_on((ValueError, FileNotFoundError), load_dataset,
                       _resolve_manifest(manifest))
    spec = ResolutionSpec(mm_per_px=mm_per_px)

    def one(sl):
        try:
            return sl.id, radiometrics.metric_summary(sl, spec, floor)
        except radiometrics.NoBoneError:
            return sl.id, None

    if not dataset:
        raise click.ClickException("dataset is empty")
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(pool.map(one, dataset))
    rows = [(sid, m) for sid, m in results if m is not None]
    skipped = len(results) - len(rows)
    if not rows:
        raise click.ClickException("no slice produced metrics")

    out_path = Path(out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "sdr", "thickness_mm", "intensity_hu", "rays_used"])
        for sid, m in rows:
            writer.writerow([sid, repr(m.sdr), repr(m.thickness_mm),
                             repr(m.intensity_hu), m.rays_used])
    params = {"manifest": manifest, "mm_per_px": mm_per_px, "floor": floor,
              "skipped": skipped}
    _sidecar(out_path, "metrics", params, seed=None)
    if dist_out:
        dist = MetricDistribution(sdr=[m.sdr for _, m in rows],
                                  thickness_mm=[m.thickness_mm for _, m in rows],
                                  intensity_hu=[m.intensity_hu for _, m in rows],
                                  skipped=skipped)
        dist.to_json(Path(dist_out))
        _sidecar(Path(dist_out), "metrics", params, seed=None)
    if skipped:
        click.echo(f"warning: skipped {skipped} slices with no bone", err=True)
    click.echo(f"wrote {len(rows)} rows to {out_path}")


# ---------------------------------------------------------------------------
# artisynth
# ---------------------------------------------------------------------------

@main.command("artisynth")
@click.option("--family", required=True,
              type=click.Choice([f.value for f in artisynth.Family]))
@click.option("--target", required=True, type=click.Path(exists=True),
              help="target metric distribution JSON")
@click.option("--n", required=True, type=int)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path(), envvar="SKULLKIT_OUT")
@click.option("--tolerance-ks", default=0.1, show_default=True)
@click.option("--max-attempts", default=5, show_default=True)
@click.option("--mm-per-px", default=0.45, show_default=True)
@click.option("--threads", default=os.cpu_count() or 1, show_default="logical cores")
def artisynth_cmd(family, target, n, seed, out, tolerance_ks, max_attempts,
                  mm_per_px, threads):
    """Generate artificial slices fitted to a target metric distribution."""
    dist = _fail_on((ValueError, KeyError, json.JSONDecodeError),
                    MetricDistribution.from_json, target)
    spec = artisynth.TargetSpec(target=dist, tolerance_ks=tolerance_ks,
                                max_attempts=max_attempts)
    slices = _fail_on((artisynth.FitFailedError, artisynth.GeometryError, ValueError),
                      artisynth.fit_to_targets, spec, family, n, seed,
                      ResolutionSpec(mm_per_px=mm_per_px), max(1, threads))
    out_dir = Path(out)
    manifest = fixtures.write_slice_dir(slices, out_dir)
    _sidecar(manifest, "artisynth", {"family": family, "target": target, "n": n,
                                     "tolerance_ks": tolerance_ks,
                                     "max_attempts": max_attempts,
                                     "mm_per_px": mm_per_px}, seed=seed)
    click.echo(f"wrote {len(slices)} {family} slices to {out_dir}")


# ---------------------------------------------------------------------------
# tsne
# ---------------------------------------------------------------------------

@main.command("tsne")
@click.option("--manifest", type=click.Path(exists=True),
              help="dataset manifest (labels come from provenance)")
@click.option("--metrics-csv", type=click.Path(exists=True),
              help="embed metric triples from a metrics CSV instead of pixels")
@click.option("--features", default="pixels", show_default=True,
              type=click.Choice(["pixels", "metrics"]))
@click.option("--out", required=True, type=click.Path(), envvar="SKULLKIT_OUT")
@click.option("--perplexity", default=30.0, show_default=True)
@click.option("--iterations", default=1000, show_default=True)
@click.option("--seed", default=0, show_default=True)
def tsne_cmd(manifest, metrics_csv, features, out, perplexity, iterations, seed):
    """Embed a dataset in 2D and write an id,label,x,y,final_kl CSV."""
    labels_by_id: dict[str, str] = {}
    if manifest:
        for entry in read_manifest(_resolve_manifest(manifest)):
            labels_by_id[entry.id] = entry.provenance.value

    if metrics_csv:
        ids, rows = [], []
        with open(metrics_csv, newline="") as fh:
            for row in csv.DictReader(fh):
                ids.append(row["id"])
                rows.append([float(row["sdr"]), float(row["thickness_mm"]),
                             float(row["intensity_hu"])])
        data = np.asarray(rows)
    elif manifest:
        dataset = _fail_on((ValueError, FileNotFoundError), load_dataset,
                           _resolve_manifest(manifest))
        ids = [s.id for s in dataset]
        if features == "pixels":
            data = np.stack([np.asarray(s.pixels, dtype=np.float64).ravel()
                             for s in dataset])
        else:
            summaries, _ = radiometrics.per_slice_metrics(dataset)
            ids = [sid for sid, _ in summaries]
            data = np.asarray([[m.sdr, m.thickness_mm, m.intensity_hu]
                               for _, m in summaries])
    else:
        raise click.UsageError("provide --manifest or --metrics-csv")

    labels = [labels_by_id.get(i, "unlabeled") for i in ids]
    matrix = _fail_on((ValueError,), tsne.DataMatrix, data, tuple(labels), tuple(ids))
    cfg = tsne.TsneConfig(perplexity=perplexity, iterations=iterations, seed=seed)
    emb = _fail_on((ValueError, tsne.DegenerateNeighborhoodError, FloatingPointError),
                   tsne.run_tsne, matrix, cfg)

    out_path = Path(out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "label", "x", "y", "final_kl"])
        for i in range(emb.n):
            writer.writerow([emb.ids[i], emb.labels[i],
                             repr(float(emb.points[i, 0])),
                             repr(float(emb.points[i, 1])),
                             repr(emb.final_kl)])
    _sidecar(out_path, "tsne", {"manifest": manifest, "metrics_csv": metrics_csv,
                                "features": features, "perplexity": perplexity,
                                "iterations": iterations}, seed=seed)
    click.echo(f"embedded {emb.n} rows; final KL {emb.final_kl:.4f}")


# ---------------------------------------------------------------------------
# fid
# ---------------------------------------------------------------------------

@main.command("fid")
@click.option("--real", required=True, type=click.Path(exists=True))
@click.option("--synthetic", required=True, type=click.Path(exists=True))
@click.option("--mode", default="standard", show_default=True,
              type=click.Choice([m.value for m in fid_mod.FidMode]))
@click.option("--out", type=click.Path(), envvar="SKULLKIT_OUT",
              help="also write the JSON to a file")
def fid_cmd(real, synthetic, mode, out):
    """Frechet distance between the Gaussian fits of two feature files."""
    stats_r = _fail_on((ValueError,), lambda: fid_mod.feature_stats(fid_mod.load_features(real)))
    stats_s = _fail_on((ValueError,), lambda: fid_mod.feature_stats(fid_mod.load_features(synthetic)))
    score = _fail_on((ValueError,), fid_mod.fid_breakdown, stats_r, stats_s, mode)
    payload = json.dumps({"fid": score.total, "mean_term": score.mean_term,
                          "trace_term": score.trace_term, "mode": score.mode.value},
                         indent=2)
    click.echo(payload)
    if out:
        Path(out).write_text(payload + "\n")
        _sidecar(Path(out), "fid", {"real": real, "synthetic": synthetic,
                                    "mode": mode}, seed=None)


# ---------------------------------------------------------------------------
# memaudit
# ---------------------------------------------------------------------------

@main.command("memaudit")
@click.option("--synth", required=True, type=click.Path(exists=True),
              help="synthetic slice dir or manifest")
@click.option("--real", required=True, type=click.Path(exists=True),
              help="real slice dir or manifest")
@click.option("--features-synth", type=click.Path(exists=True))
@click.option("--features-real", type=click.Path(exists=True))
@click.option("--k", default=3, show_default=True)
@click.option("--mse-near-threshold", default=450.0, show_default=True)
@click.option("--out", required=True, type=click.Path(), envvar="SKULLKIT_OUT")
def memaudit_cmd(synth, real, features_synth, features_real, k,
                 mse_near_threshold, out):
    """Nearest-real search for every synthetic slice plus a duplicate verdict."""
    synth_set = _fail_on((ValueError, FileNotFoundError), load_dataset,
                         _resolve_manifest(synth))
    real_set = _fail_on((ValueError, FileNotFoundError), load_dataset,
                        _resolve_manifest(real))
    mse_records = _fail_on((ValueError,), memaudit.nearest_by_mse,
                           synth_set, real_set, k)
    if features_synth and features_real:
        feats_s = _fail_on((ValueError,), fid_mod.load_features, features_synth)
        feats_r = _fail_on((ValueError,), fid_mod.load_features, features_real)
    else:
        feats_s = fid_mod.random_projection_features(synth_set)
        feats_r = fid_mod.random_projection_features(real_set)
    cos_records = _fail_on((ValueError,), memaudit.nearest_by_cosine,
                           feats_s, feats_r, k,
                           [s.id for s in synth_set], [r.id for r in real_set])
    report = _fail_on((memaudit.IdMismatchError,), memaudit.audit_report,
                      mse_records, cos_records, mse_near_threshold)
    out_path = Path(out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    _sidecar(out_path, "memaudit", {"synth": synth, "real": real, "k": k,
                                    "mse_near_threshold": mse_near_threshold},
             seed=None)
    click.echo(f"verdict: {report.verdict}")


# ---------------------------------------------------------------------------
# vtt
# ---------------------------------------------------------------------------

@main.group("vtt")
def vtt_group() -> None:
    """Visual Turing test service and scoring."""


@vtt_group.command("serve")
@click.option("--port", default=8000, show_default=True, envvar="SKULLKIT_PORT")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--data-dir", default="vtt_data", show_default=True,
              envvar="SKULLKIT_OUT")
@click.option("--ui-dir", type=click.Path(), default=None,
              help="serve a built quiz UI from this directory at /ui")
def vtt_serve(port, host, data_dir, ui_dir):
    """Run the HTTP quiz service."""
    import uvicorn

    from .service import create_app
    uvicorn.run(create_app(data_dir, ui_dir), host=host, port=port)


_REPORT_COLUMNS = ["grader_id", "total_time_min", "mean_time_synthetic_s",
                   "mean_time_real_s", "accuracy_percent", "tpr", "fpr",
                   "switch_rate_percent"]


@vtt_group.command("report")
@click.option("--session-log", "session_logs", required=True, multiple=True,
              type=click.Path(exists=True))
@click.option("--out", type=click.Path(), envvar="SKULLKIT_OUT",
              help="CSV path; stdout if omitted")
def vtt_report(session_logs, out):
    """Score one or more session logs into a performance-summary CSV."""
    rows = []
    for log in session_logs:
        session, quiz = _fail_on((ValueError,), vtt.replay_session_log, log)
        report = _fail_on((vtt.IncompleteSessionError,), vtt.score_session,
                          session, quiz)
        rows.append([session.grader_id, repr(report.total_time_s / 60.0),
                     repr(report.mean_time_synthetic_s), repr(report.mean_time_real_s),
                     repr(report.accuracy_percent), repr(report.tpr), repr(report.fpr),
                     repr(report.switch_rate_percent)])
    if len(rows) > 1:
        avg = ["average"] + [repr(float(np.mean([float(r[i]) for r in rows])))
                             for i in range(1, len(_REPORT_COLUMNS))]
        rows.append(avg)
    target = open(out, "w", newline="") if out else sys.stdout
    try:
        writer = csv.writer(target, lineterminator="\n")
        writer.writerow(_REPORT_COLUMNS)
        writer.writerows(rows)
    finally:
        if out:
            target.close()
            _sidecar(Path(out), "vtt report", {"session_logs": list(session_logs)},
                     seed=None)


# ---------------------------------------------------------------------------
# fixtures
# ---------------------------------------------------------------------------

@main.command("fixtures")
@click.option("--out", required=True, type=click.Path(), envvar="SKULLKIT_OUT")
@click.option("--seed", default=0, show_default=True)
@click.option("--n-random", default=200, show_default=True)
@click.option("--n-proxy", default=300, show_default=True)
def fixtures_cmd(out, seed, n_random, n_proxy):
    """Emit the deterministic fixture tree used by tests and demo pipelines."""
    produced = fixtures.emit_fixture_tree(out, seed, n_random, n_proxy)
    _sidecar(Path(out) / "fixtures", "fixtures",
             {"n_random": n_random, "n_proxy": n_proxy}, seed=seed)
    for name, path in sorted(produced.items()):
        click.echo(f"{name}: {path}")


if __name__ == "__main__":
    main()
