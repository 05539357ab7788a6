"""Command-line entry point wiring all toolkit modules.

Exit codes: 0 success, 1 operation failure (diagnostic on stderr),
2 usage error. All flags are long-form; every default is shown in help.
"""

from __future__ import annotations

import json
import sys
from dataclasses import replace
from pathlib import Path

import click
import numpy as np

from . import analytics, metrics, synth
from .errors import AsdError
from .features import featurize_track
from .labels import (
    parse_label_csv,
    serialize_labels,
    timeline_from_frames,
)
from .model import load_checkpoint, save_checkpoint
from .model.spec import ModelSpec, parse_variant
from .tracks import raw_tracks_from_frames, run_pipeline, tracks_to_frames
from .training import TrainConfig, train as run_training


def _fail(err: Exception) -> None:
    click.echo(f"error: {err}", err=True)
    sys.exit(1)


def _read(path: str) -> str:
    return Path(path).read_text()


def _write_output(out: str | None, text: str) -> None:
    if out:
        Path(out).write_text(text)
    else:
        click.echo(text, nl=False)


def _load_tracks_and_timelines(labels_path: str):
    by_track = parse_label_csv(_read(labels_path))
    tracks = run_pipeline(raw_tracks_from_frames(by_track))
    timelines = {tid: timeline_from_frames(frames) for tid, frames in by_track.items()}
    return by_track, tracks, timelines


def _featurized_windows(labels_path: str, media_dir: str):
    """ExampleWindows for every track, with media looked up by video_id."""
    by_track, tracks, timelines = _load_tracks_and_timelines(labels_path)
    windows = []
    per_track = {}
    for track in tracks:
        source = track.track_id.split(":")[0] if ":" in track.track_id else track.track_id
        timeline = timelines.get(track.track_id) or timelines[source]
        frames, waveform = synth.load_clip_media(media_dir, track.video_id)
        ws = featurize_track(track, timeline, frames, waveform)
        windows.extend(ws)
        per_track[track.track_id] = (track, timeline, ws)
    return windows, per_track


@click.group()
def main() -> None:
    """Active speaker detection toolkit."""


@main.command()
@click.option("--labels", required=True, help="Label CSV to validate.")
def validate(labels: str) -> None:
    """Parse a label CSV and check every invariant."""
    try:
        by_track = parse_label_csv(_read(labels))
        for frames in by_track.values():
            timeline_from_frames(frames)
    except (AsdError, OSError) as err:
        _fail(err)
    total = sum(len(v) for v in parse_label_csv(_read(labels)).values())
    click.echo(f"ok: {total} frames in {len(by_track)} tracks")


@main.command()
@click.option("--labels", required=True, help="Input label CSV.")
@click.option("--out", required=True, help="Output CSV of pipeline-processed tracks.")
def tracks(labels: str, out: str) -> None:
    """Gap-fill, split, and length-bound face tracks."""
    try:
        by_track = parse_label_csv(_read(labels))
        processed = run_pipeline(raw_tracks_from_frames(by_track))
        timelines = {tid: timeline_from_frames(f) for tid, f in by_track.items()}
        frames = []
        for track in processed:
            source = track.track_id.split("#")[0]
            tl = timelines.get(track.track_id) or timelines.get(source)
            if tl is None:  # gap-split tracks carry a :idx suffix too
                tl = timelines.get(source.rsplit(":", 1)[0])
            for rec in tracks_to_frames([track]):
                label = rec.label
                if tl is not None and tl.start <= rec.timestamp <= tl.end:
                    label = tl.label_at(rec.timestamp)
                frames.append(replace(rec, label=label))
        Path(out).write_text(serialize_labels(frames))
    except (AsdError, OSError) as err:
        _fail(err)
    click.echo(f"wrote {len(processed)} tracks to {out}")


@main.command()
@click.option("--labels", required=True, help="Label CSV to summarize.")
@click.option("--out", default=None, help="Write JSON report here instead of stdout.")
def stats(labels: str, out: str | None) -> None:
    """Per-label segment statistics (hours, counts, mean durations)."""
    try:
        by_track = parse_label_csv(_read(labels))
        timelines = [timeline_from_frames(f) for f in by_track.values()]
        report = analytics.segment_statistics(timelines)
    except (AsdError, OSError) as err:
        _fail(err)
    if out:
        Path(out).write_text(json.dumps(report.to_dict(), indent=2))
    else:
        click.echo(report.render(), nl=False)


@main.command()
@click.option(
    "--labels",
    "label_files",
    required=True,
    multiple=True,
    help="One label CSV per rater over the same frames (repeatable).",
)
def kappa(label_files: tuple[str, ...]) -> None:
    """Fleiss' kappa across raters' per-frame labels."""
    try:
        if len(label_files) < 2:
            raise AsdError("need at least two rater label files")
        raters = []
        for path in label_files:
            by_track = parse_label_csv(_read(path))
            raters.append(
                {
                    (f.video_id, f.track_id, round(f.timestamp, 6)): f.label
                    for frames in by_track.values()
                    for f in frames
                }
            )
        keys = sorted(raters[0])
        for i, r in enumerate(raters[1:], start=2):
            if sorted(r) != keys:
                raise AsdError(f"rater file {i} covers different frames than file 1")
        from .labels import SpeakLabel

        categories = list(SpeakLabel)
        matrix = [
            [sum(1 for r in raters if r[k] is cat) for cat in categories] for k in keys
        ]
        value = analytics.fleiss_kappa(matrix)
    except (AsdError, OSError) as err:
        _fail(err)
    click.echo(f"fleiss_kappa: {value:.6f}")


@main.command()
@click.option("--labels", required=True, help="Speaker label CSV.")
@click.option("--speech-labels", required=True, help="Speech activity CSV (video,start,end,condition).")
@click.option("--out", default=None, help="Write JSON report here instead of stdout.")
def overlap(labels: str, speech_labels: str, out: str | None) -> None:
    """Cross-tabulate speaking faces against speech activity in time."""
    try:
        by_track = parse_label_csv(_read(labels))
        segments = analytics.parse_speech_csv(_read(speech_labels))
        pairs = []
        lo, hi = np.inf, -np.inf
        for frames in by_track.values():
            tl = timeline_from_frames(frames)
            pairs.append((frames[0].video_id, tl))
            lo, hi = min(lo, tl.start), max(hi, tl.end)
        for seg in segments:
            lo, hi = min(lo, seg.start), max(hi, seg.end)
        report = analytics.speech_overlap_report(pairs, segments, (lo, hi))
    except (AsdError, OSError) as err:
        _fail(err)
    if out:
        Path(out).write_text(json.dumps(report.to_dict(), indent=2))
    else:
        click.echo(report.render(), nl=False)


@main.command()
@click.option("--labels", required=True, help="Speaker label CSV.")
@click.option("--actions", required=True, help="CSV of track_id,timestamp,action points.")
@click.option("--out", default=None, help="Write JSON report here instead of stdout.")
def cooccur(labels: str, actions: str, out: str | None) -> None:
    """Speaker-label distribution under point-annotated actions."""
    try:
        by_track = parse_label_csv(_read(labels))
        timelines = {tid: timeline_from_frames(f) for tid, f in by_track.items()}
        points = []
        for lineno, line in enumerate(_read(actions).splitlines(), start=1):
            if not line.strip():
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise AsdError(f"actions line {lineno}: expected track_id,timestamp,action")
            points.append((parts[0], float(parts[1]), parts[2]))
        report = analytics.action_cooccurrence(points, timelines)
    except (AsdError, OSError, ValueError) as err:
        _fail(err)
    if out:
        Path(out).write_text(json.dumps(report.to_dict(), indent=2))
    else:
        click.echo(report.render(), nl=False)


@main.command()
@click.option("--labels", required=True, help="Label CSV for the tracks to featurize.")
@click.option("--media-dir", required=True, help="Corpus media directory (per-video subdirs).")
@click.option("--out", required=True, help="Output directory for per-track feature archives.")
def featurize(labels: str, media_dir: str, out: str) -> None:
    """Write crops, Mel features, targets, and masks per track (.npz)."""
    try:
        _, per_track = _featurized_windows(labels, media_dir)
        out_dir = Path(out)
        out_dir.mkdir(parents=True, exist_ok=True)
        for track_id, (_track, _tl, windows) in sorted(per_track.items()):
            w0 = windows[0]
            np.savez_compressed(
                out_dir / f"{track_id.replace(':', '_').replace('#', '_')}.npz",
                track_id=track_id,
                crops=w0.crops,
                mels=w0.mels,
                targets=np.stack([w.targets for w in windows]),
                masks=np.stack([w.mask for w in windows]),
                start_indices=np.array([w.start_index for w in windows]),
            )
    except (AsdError, OSError) as err:
        _fail(err)
    click.echo(f"featurized {len(per_track)} tracks into {out}")


@main.command("synth")
@click.option("--n", required=True, type=int, help="Clips per kind (corpus has 4 kinds).")
@click.option("--seed", default=0, show_default=True, type=int, help="Corpus seed.")
@click.option("--out", required=True, help="Output corpus directory.")
@click.option("--noise", default=0.1, show_default=True, type=float, help="Noise level in [0,1].")
@click.option("--duration", default=3.0, show_default=True, type=float, help="Clip length in seconds.")
def synth_cmd(n: int, seed: int, out: str, noise: float, duration: float) -> None:
    """Generate a synthetic labeled corpus."""
    try:
        clips = synth.generate_corpus(
            n_per_kind=n, seed=seed, duration=duration, noise_level=noise, out_dir=out
        )
    except (AsdError, OSError) as err:
        _fail(err)
    click.echo(f"wrote {len(clips)} clips to {out}")


@main.command("train")
@click.option("--labels", required=True, help="Label CSV of the training corpus.")
@click.option("--media-dir", required=True, help="Corpus media directory.")
@click.option("--out", required=True, help="Output checkpoint path.")
@click.option("--config", default=None, help="Training config JSON (defaults otherwise).")
@click.option("--variant", default=None, help="Model variant, e.g. AV-GRU-f2.")
@click.option("--seed", default=None, type=int, help="Override the config seed.")
def train_cmd(labels, media_dir, out, config, variant, seed) -> None:
    """Train a model and write a checkpoint (+ .history.json)."""
    try:
        cfg = TrainConfig.from_json(_read(config)) if config else TrainConfig()
        if variant:
            modalities, head, stack = parse_variant(variant)
            cfg = replace(
                cfg, spec=replace(cfg.spec, modalities=modalities, head=head, stack_size=stack)
            )
        if seed is not None:
            cfg = replace(cfg, seed=seed)
        windows, _ = _featurized_windows(labels, media_dir)
        params, history = run_training(windows, cfg)
        save_checkpoint(out, cfg.spec, params, meta={"config": json.loads(cfg.to_json())})
        Path(out + ".history.json").write_text(history.to_json())
    except (AsdError, OSError) as err:
        _fail(err)
    last = history.epochs[-1]
    shown = f"{last.val_auroc:.4f}" if last.val_auroc is not None else "undefined"
    click.echo(f"trained {cfg.spec.variant_name()}: final loss {last.total:.4f}, val auROC {shown}")


@main.command()
@click.option("--checkpoint", required=True, help="Trained model checkpoint.")
@click.option("--labels", required=True, help="Label CSV of the tracks to score.")
@click.option("--media-dir", required=True, help="Corpus media directory.")
@click.option("--out", required=True, help="Output prediction CSV (9 fields).")
@click.option("--threshold", default=0.5, show_default=True, type=float, help="Predicted-label threshold.")
def score(checkpoint, labels, media_dir, out, threshold) -> None:
    """Score every frame of every track with a trained model."""
    try:
        spec, params, _meta = load_checkpoint(checkpoint)
        _, per_track = _featurized_windows(labels, media_dir)
        scored = []
        for track_id, (track, timeline, windows) in sorted(per_track.items()):
            w0 = windows[0]
            scored.extend(
                metrics.score_track(params, spec, track, timeline, w0.crops, w0.mels)
            )
        Path(out).write_text(metrics.serialize_predictions(scored, threshold))
    except (AsdError, OSError) as err:
        _fail(err)
    click.echo(f"scored {len(scored)} frames to {out}")


def _scored_frames_from_files(labels: str, predictions: str):
    by_track = parse_label_csv(_read(labels))
    truth = {
        f"{f.video_id},{f.timestamp:.6f},{f.track_id}": f.label
        for frames in by_track.values()
        for f in frames
    }
    scored = metrics.parse_prediction_csv(_read(predictions), labels=truth)
    truth_frames = [f for frames in by_track.values() for f in frames]
    return scored, truth_frames


@main.command("eval")
@click.option("--labels", required=True, help="Ground-truth label CSV.")
@click.option("--predictions", required=True, help="Prediction CSV from `score`.")
@click.option("--speech-labels", default=None, help="Speech activity CSV for condition buckets.")
@click.option("--threshold", default=0.5, show_default=True, type=float, help="Balanced-accuracy threshold.")
@click.option("--bucket", type=click.Choice(["noise", "size"]), default=None, help="Bucketed breakdown.")
@click.option("--out", default=None, help="Write JSON report here instead of stdout.")
def eval_cmd(labels, predictions, speech_labels, threshold, bucket, out) -> None:
    """Full evaluation report: auROC, balanced accuracy, optional buckets."""
    try:
        scored, truth_frames = _scored_frames_from_files(labels, predictions)
        if speech_labels:
            segments = analytics.parse_speech_csv(_read(speech_labels))
            scored = metrics.attach_conditions(scored, segments)
        report = metrics.evaluate(scored, truth=truth_frames, threshold=threshold)
        if bucket == "noise" and report.by_condition is None:
            raise AsdError("condition buckets need --speech-labels")
        if bucket == "size" and report.by_size is None:
            raise AsdError("size buckets need face widths in the predictions")
    except (AsdError, OSError) as err:
        _fail(err)
    if out:
        Path(out).write_text(json.dumps(report.to_dict(), indent=2))
    else:
        click.echo(report.render(), nl=False)


@main.command("map")
@click.option("--labels", required=True, help="Ground-truth label CSV.")
@click.option("--predictions", required=True, help="Prediction CSV from `score`.")
def map_cmd(labels, predictions) -> None:
    """Detection-style mean average precision."""
    try:
        scored, truth_frames = _scored_frames_from_files(labels, predictions)
        value = metrics.activitynet_map(truth_frames, scored)
    except (AsdError, OSError) as err:
        _fail(err)
    click.echo(f"map: {value:.6f}")


@main.command()
@click.option("--labels", required=True, help="Label CSV defining the annotation tasks.")
@click.option("--media-dir", required=True, help="Corpus media directory.")
@click.option("--journal", required=True, help="Append-only submission journal path.")
@click.option("--host", default="127.0.0.1", show_default=True, help="Bind address.")
@click.option("--port", default=8787, show_default=True, type=int, help="Bind port.")
def serve(labels, media_dir, journal, host, port) -> None:
    """Run the annotation service over HTTP."""
    try:
        import uvicorn

        from .service import build_app

        app = build_app(labels_path=labels, media_dir=media_dir, journal_path=journal)
    except (AsdError, OSError) as err:
        _fail(err)
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
