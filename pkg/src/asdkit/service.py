"""Annotation backend: serves rating tasks, persists dense label segments.

The store is plain Python (testable without HTTP); ``build_app`` wraps it
in a FastAPI application. Writes go through optimistic per-(task, rater)
versioning and are appended to a fsync'd journal *before* the caller is
acknowledged, so a crash can lose at most unacknowledged submissions.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .analytics import fleiss_kappa
from .errors import AsdError, ValidationError
from .labels import (
    DEFAULT_FRAME_RATE,
    LabeledFrame,
    LabelTimeline,
    Segment,
    SpeakLabel,
    parse_label_csv,
    serialize_labels,
)

ENVELOPE_RATE = 50.0  # Hz; timeline display needs >= 50 samples/s
_EPS = 1e-9

NOT_FOUND = "NOT_FOUND"
VALIDATION = "VALIDATION"
CONFLICT = "CONFLICT"


class ServiceError(AsdError):
    """Error with a machine-readable code and optional structured detail."""

    def __init__(self, code: str, message: str, **detail):
        super().__init__(message)
        self.code = code
        self.detail = detail


@dataclass(frozen=True)
class AnnotationTask:
    task_id: str  # == track_id
    video_id: str
    frames: tuple[LabeledFrame, ...]  # source boxes define the geometry
    start: float  # track span: first frame - half period
    end: float  # last frame + half period
    media: dict[str, str]  # media references (paths), served by reference
    envelope: tuple[float, ...]  # windowed RMS at ENVELOPE_RATE


def _rms_envelope(waveform: np.ndarray, sample_rate: int) -> tuple[float, ...]:
    """Non-overlapping windowed RMS at ENVELOPE_RATE samples per second."""
    window = max(int(round(sample_rate / ENVELOPE_RATE)), 1)
    n = len(waveform) // window
    if n == 0:
        return (float(np.sqrt(np.mean(np.square(waveform, dtype=np.float64)))),)
    head = np.asarray(waveform[: n * window], dtype=np.float64).reshape(n, window)
    return tuple(np.sqrt(np.mean(head * head, axis=1)).tolist())


def _build_tasks(labels_path: str | Path, media_dir: str | Path) -> dict[str, AnnotationTask]:
    labels_path = Path(labels_path)
    media_dir = Path(media_dir)
    by_track = parse_label_csv(labels_path.read_text())
    half = 0.5 / DEFAULT_FRAME_RATE
    tasks: dict[str, AnnotationTask] = {}
    for track_id, frames in sorted(by_track.items()):
        frames = sorted(frames, key=lambda f: f.timestamp)
        video_id = frames[0].video_id
        audio_path = media_dir / video_id / "audio.npy"
        frames_path = media_dir / video_id / "frames.npy"
        if not audio_path.exists():
            raise ValidationError(f"no audio media for video {video_id!r} under {media_dir}")
        from .features import SAMPLE_RATE

        envelope = _rms_envelope(np.load(audio_path), SAMPLE_RATE)
        tasks[track_id] = AnnotationTask(
            task_id=track_id,
            video_id=video_id,
            frames=tuple(frames),
            start=frames[0].timestamp - half,
            end=frames[-1].timestamp + half,
            media={"frames": str(frames_path), "audio": str(audio_path)},
            envelope=envelope,
        )
    return tasks


def _validate_coverage(task: AnnotationTask, segments: list[Segment]) -> None:
    """Gap/overlap checks that name the offending interval."""

    def bad(kind: str, lo: float, hi: float):
        return ServiceError(
            VALIDATION,
            f"{kind} over [{lo:.6f}, {hi:.6f}] on task {task.task_id}",
            interval=[lo, hi],
            kind=kind,
        )

    ordered = sorted(segments, key=lambda s: s.start)
    for seg in ordered:
        if not seg.end > seg.start:
            raise bad("empty segment", seg.start, seg.end)
    if ordered[0].start > task.start + _EPS:
        raise bad("gap", task.start, ordered[0].start)
    if ordered[0].start < task.start - _EPS:
        raise bad("overshoot", ordered[0].start, task.start)
    for a, b in zip(ordered, ordered[1:]):
        if b.start > a.end + _EPS:
            raise bad("gap", a.end, b.start)
        if b.start < a.end - _EPS:
            raise bad("overlap", b.start, a.end)
    if ordered[-1].end < task.end - _EPS:
        raise bad("gap", ordered[-1].end, task.end)
    if ordered[-1].end > task.end + _EPS:
        raise bad("overshoot", task.end, ordered[-1].end)


class AnnotationStore:
    """Task state plus a durable append-only journal of accepted writes."""

    def __init__(self, labels_path: str | Path, media_dir: str | Path, journal_path: str | Path):
        self._tasks = _build_tasks(labels_path, media_dir)
        self._journal_path = Path(journal_path)
        self._lock = threading.Lock()
        # task_id -> rater_id -> (version, LabelTimeline)
        self._ratings: dict[str, dict[str, tuple[int, LabelTimeline]]] = {
            tid: {} for tid in self._tasks
        }
        self._replay_journal()
        self._journal = open(self._journal_path, "a", encoding="utf-8")

    # -- persistence ---------------------------------------------------------

    def _replay_journal(self) -> None:
        if not self._journal_path.exists():
            return
        for line in self._journal_path.read_text().splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            segments = tuple(
                Segment(s, e, SpeakLabel.from_string(lab)) for s, e, lab in rec["segments"]
            )
            timeline = LabelTimeline(track_id=rec["task_id"], segments=segments)
            self._ratings[rec["task_id"]][rec["rater_id"]] = (rec["version"], timeline)

    def _append_journal(self, task_id: str, rater_id: str, version: int, timeline: LabelTimeline):
        rec = {
            "task_id": task_id,
            "rater_id": rater_id,
            "version": version,
            "segments": [[s.start, s.end, s.label.value] for s in timeline.segments],
        }
        self._journal.write(json.dumps(rec, sort_keys=True) + "\n")
        self._journal.flush()
        os.fsync(self._journal.fileno())

    def close(self) -> None:
        self._journal.close()

    # -- reads ----------------------------------------------------------------

    def _status(self, task_id: str) -> str:
        task = self._tasks[task_id]
        ratings = self._ratings[task_id]
        if not ratings:
            return "UNRATED"
        for _, timeline in ratings.values():
            if timeline.start <= task.start + _EPS and timeline.end >= task.end - _EPS:
                return "COMPLETE"
        return "PARTIAL"

    def list_tasks(self, status: str | None = None) -> list[dict]:
        with self._lock:
            out = []
            for tid in sorted(self._tasks):
                st = self._status(tid)
                if status is not None and st != status:
                    continue
                out.append(
                    {
                        "task_id": tid,
                        "video_id": self._tasks[tid].video_id,
                        "status": st,
                        "rater_count": len(self._ratings[tid]),
                        "versions": {
                            r: v for r, (v, _) in sorted(self._ratings[tid].items())
                        },
                    }
                )
            return out

    def get_task(self, task_id: str) -> dict:
        with self._lock:
            task = self._tasks.get(task_id)
            if task is None:
                raise ServiceError(NOT_FOUND, f"no task {task_id!r}")
            return {
                "task_id": task.task_id,
                "video_id": task.video_id,
                "status": self._status(task_id),
                "start": task.start,
                "end": task.end,
                "media": dict(task.media),
                "envelope_rate": ENVELOPE_RATE,
                "envelope": list(task.envelope),
                "frames": [
                    {
                        "timestamp": f.timestamp,
                        "box": [f.box.x1, f.box.y1, f.box.x2, f.box.y2],
                    }
                    for f in task.frames
                ],
                "versions": {r: v for r, (v, _) in sorted(self._ratings[task_id].items())},
            }

    # -- writes ----------------------------------------------------------------

    def put_segments(
        self, task_id: str, rater_id: str, version: int, segments: list[Segment]
    ) -> int:
        task = self._tasks.get(task_id)
        if task is None:
            raise ServiceError(NOT_FOUND, f"no task {task_id!r}")
        if not segments:
            raise ServiceError(VALIDATION, "no segments submitted")
        _validate_coverage(task, segments)
        timeline = LabelTimeline(
            track_id=task_id, segments=tuple(sorted(segments, key=lambda s: s.start))
        )
        with self._lock:
            stored = self._ratings[task_id].get(rater_id, (0, None))[0]
            if version != stored + 1:
                raise ServiceError(
                    CONFLICT,
                    f"version {version} rejected for task {task_id}, rater {rater_id}: "
                    f"stored version is {stored}",
                    current_version=stored,
                )
            # Durable before acknowledged: journal first, then commit.
            self._append_journal(task_id, rater_id, version, timeline)
            self._ratings[task_id][rater_id] = (version, timeline)
            return version

    # -- aggregation ------------------------------------------------------------

    def _require_tasks(self, task_ids: list[str]) -> list[str]:
        missing = [t for t in task_ids if t not in self._tasks]
        if missing:
            raise ServiceError(NOT_FOUND, f"no task {missing[0]!r}")
        return task_ids

    def export_csv(self, task_ids: list[str]) -> str:
        with self._lock:
            self._require_tasks(task_ids)
            incomplete = [t for t in task_ids if self._status(t) != "COMPLETE"]
            if incomplete:
                raise ServiceError(
                    VALIDATION,
                    "tasks not complete: " + ", ".join(sorted(incomplete)),
                    incomplete=sorted(incomplete),
                )
            out: list[LabeledFrame] = []
            for tid in task_ids:
                task = self._tasks[tid]
                timelines = [tl for _, tl in self._ratings[tid].values()]
                for f in task.frames:
                    votes: dict[SpeakLabel, int] = {}
                    for tl in timelines:
                        if tl.start - _EPS <= f.timestamp <= tl.end + _EPS:
                            t = min(max(f.timestamp, tl.start), tl.end)
                            lab = tl.label_at(t)
                            votes[lab] = votes.get(lab, 0) + 1
                    best = max(votes.values())
                    winners = [lab for lab, n in votes.items() if n == best]
                    label = winners[0] if len(winners) == 1 else SpeakLabel.NOT_SPEAKING
                    out.append(
                        LabeledFrame(
                            video_id=f.video_id,
                            timestamp=f.timestamp,
                            box=f.box,
                            label=label,
                            track_id=tid,
                        )
                    )
            return serialize_labels(out)

    def agreement(self, task_ids: list[str]) -> dict:
        with self._lock:
            self._require_tasks(task_ids)
            counts = {t: len(self._ratings[t]) for t in task_ids}
            n_raters = counts[task_ids[0]] if task_ids else 0
            if any(c != n_raters for c in counts.values()):
                raise ServiceError(
                    VALIDATION,
                    "uneven rater counts across tasks: "
                    + ", ".join(f"{t}={c}" for t, c in sorted(counts.items())),
                )
            if n_raters < 2:
                raise ServiceError(VALIDATION, f"need at least 2 raters, got {n_raters}")
            categories = list(SpeakLabel)
            rows = []
            for tid in task_ids:
                task = self._tasks[tid]
                timelines = [tl for _, tl in self._ratings[tid].values()]
                for f in task.frames:
                    row = [0] * len(categories)
                    for tl in timelines:
                        t = min(max(f.timestamp, tl.start), tl.end)
                        row[categories.index(tl.label_at(t))] += 1
                    rows.append(row)
            return {
                "kappa": fleiss_kappa(np.array(rows)),
                "n_raters": n_raters,
                "n_items": len(rows),
            }


# ---------------------------------------------------------------------------
# HTTP layer
# ---------------------------------------------------------------------------


def _parse_segments(payload: dict) -> tuple[int, list[Segment]]:
    try:
        version = int(payload["version"])
        segments = [
            Segment(float(s["start"]), float(s["end"]), SpeakLabel.from_string(s["label"]))
            for s in payload["segments"]
        ]
    except (KeyError, TypeError, ValueError, AsdError) as err:
        raise ServiceError(VALIDATION, f"malformed submission body: {err}") from None
    return version, segments


def build_app(labels_path: str | Path, media_dir: str | Path, journal_path: str | Path):
    """FastAPI application over a fresh AnnotationStore."""
    from fastapi import FastAPI
    from fastapi.responses import JSONResponse, PlainTextResponse

    store = AnnotationStore(labels_path, media_dir, journal_path)
    app = FastAPI(title="asdkit annotation service")
    app.state.store = store

    status_codes = {NOT_FOUND: 404, VALIDATION: 422, CONFLICT: 409}

    @app.exception_handler(ServiceError)
    async def _service_error(_req, err: ServiceError):
        body = {"code": err.code, "message": str(err)}
        body.update(err.detail)
        return JSONResponse(status_code=status_codes[err.code], content=body)

    @app.exception_handler(AsdError)
    async def _asd_error(_req, err: AsdError):
        return JSONResponse(
            status_code=422, content={"code": VALIDATION, "message": str(err)}
        )

    @app.get("/tasks")
    def list_tasks(status: str | None = None):
        return store.list_tasks(status)

    @app.get("/tasks/{task_id}")
    def get_task(task_id: str):
        return store.get_task(task_id)

    @app.put("/tasks/{task_id}/raters/{rater_id}/segments")
    def put_segments(task_id: str, rater_id: str, payload: dict):
        version, segments = _parse_segments(payload)
        accepted = store.put_segments(task_id, rater_id, version, segments)
        return {"task_id": task_id, "rater_id": rater_id, "version": accepted}

    @app.get("/export")
    def export(ids: str):
        task_ids = [t for t in ids.split(",") if t]
        return PlainTextResponse(store.export_csv(task_ids), media_type="text/csv")

    @app.get("/agreement")
    def agreement(ids: str):
        task_ids = [t for t in ids.split(",") if t]
        return store.agreement(task_ids)

    return app
