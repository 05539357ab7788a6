"""Scoring and evaluation: auROC, balanced accuracy, condition/size
breakdowns, detection-style mAP, and whole-track inference.

All metrics are pure functions over ScoredFrame sequences. Positives are
SPEAKING_AUDIBLE by default; SPEAKING_NOT_AUDIBLE counts as negative
unless ``audible_only=False``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .analytics import SpeechCondition
from .errors import ParseError, ValidationError
from .features import CROP_SIZE
from .labels import BoundingBox, LabeledFrame, SpeakLabel, format_float
from .model import HeadType, ModelSpec, forward

THRESHOLD_DEFAULT = 0.5
MAP_IOU_THRESHOLD = 0.5
GRID_TOLERANCE = 1.0 / 40.0  # half a frame period

SIZE_BUCKETS = (("Small", 0.0, 64.0), ("Medium", 64.0, 128.0), ("Large", 128.0, float("inf")))

CONDITION_BUCKETS = {
    SpeechCondition.NO_SPEECH: "Clean",
    SpeechCondition.CLEAN: "Clean",
    SpeechCondition.SPEECH_WITH_NOISE: "Noise",
    SpeechCondition.SPEECH_WITH_MUSIC: "Music",
}


@dataclass(frozen=True)
class ScoredFrame:
    """One face instant with a speaking probability and its ground truth."""

    video_id: str
    timestamp: float
    box: BoundingBox
    score: float
    label: SpeakLabel
    track_id: str = ""
    condition: SpeechCondition | None = None
    face_width_px: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValidationError(f"score {self.score} outside [0,1]")

    def is_positive(self, audible_only: bool = True) -> bool:
        if audible_only:
            return self.label is SpeakLabel.SPEAKING_AUDIBLE
        return self.label is not SpeakLabel.NOT_SPEAKING


def _score_label_arrays(frames, audible_only):
    scores = np.array([f.score for f in frames], dtype=np.float64)
    pos = np.array([f.is_positive(audible_only) for f in frames], dtype=bool)
    return scores, pos


def mann_whitney_auc(scores: np.ndarray, positives: np.ndarray) -> float:
    """P(score_pos > score_neg) + half credit for ties, via one sort."""
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(positives, dtype=bool)
    n_pos = int(positives.sum())
    n_neg = positives.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValidationError("auROC undefined: need both classes present")
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(scores.size, dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0  # average rank, 1-based
        i = j + 1
    rank_sum = ranks[positives].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def roc_auc(frames, audible_only: bool = True) -> float:
    """Area under the ROC curve over ScoredFrames."""
    scores, pos = _score_label_arrays(list(frames), audible_only)
    return mann_whitney_auc(scores, pos)


def roc_points(frames, audible_only: bool = True) -> list[tuple[float, float]]:
    """(false positive rate, true positive rate) at every distinct score."""
    scores, pos = _score_label_arrays(list(frames), audible_only)
    n_pos = int(pos.sum())
    n_neg = pos.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValidationError("ROC undefined: need both classes present")
    order = np.argsort(-scores, kind="stable")
    points = [(0.0, 0.0)]
    tp = fp = 0
    for i, idx in enumerate(order):
        tp += bool(pos[idx])
        fp += not pos[idx]
        last = i + 1 == order.size
        if last or scores[order[i + 1]] != scores[idx]:
            points.append((fp / n_neg, tp / n_pos))
    return points


def balanced_accuracy(
    frames, threshold: float = THRESHOLD_DEFAULT, audible_only: bool = True
) -> float:
    """(TPR + TNR) / 2, predicting positive iff score >= threshold."""
    scores, pos = _score_label_arrays(list(frames), audible_only)
    n_pos = int(pos.sum())
    n_neg = pos.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValidationError("balanced accuracy undefined: need both classes")
    pred = scores >= threshold
    tpr = float((pred & pos).sum()) / n_pos
    tnr = float((~pred & ~pos).sum()) / n_neg
    return 0.5 * (tpr + tnr)


def _size_bucket(width_px: float) -> str:
    for name, lo, hi in SIZE_BUCKETS:
        if lo <= width_px < hi:
            return name
    raise ValidationError(f"negative face width {width_px}")


def bucketed_metrics(
    frames,
    by: str,
    threshold: float = THRESHOLD_DEFAULT,
    audible_only: bool = True,
) -> dict[str, dict]:
    """Balanced accuracy per bucket at one fixed threshold.

    ``by`` is "condition" (Clean/Noise/Music) or "size" (Small/Medium/
    Large face widths in pixels). Buckets holding a single class are
    reported with accuracy None rather than dropped.
    """
    frames = list(frames)
    groups: dict[str, list[ScoredFrame]] = {}
    for f in frames:
        if by == "condition":
            if f.condition is None:
                raise ValidationError(
                    f"frame at {f.video_id}:{f.timestamp} lacks a condition attribute"
                )
            key = CONDITION_BUCKETS[f.condition]
        elif by == "size":
            if f.face_width_px is None:
                raise ValidationError(
                    f"frame at {f.video_id}:{f.timestamp} lacks a face width"
                )
            key = _size_bucket(f.face_width_px)
        else:
            raise ValidationError(f"unknown bucketing {by!r}; use 'condition' or 'size'")
        groups.setdefault(key, []).append(f)
    out = {}
    for key, members in sorted(groups.items()):
        try:
            acc = balanced_accuracy(members, threshold, audible_only)
        except ValidationError:
            acc = None
        out[key] = {"count": len(members), "balanced_accuracy": acc}
    return out


# ---------------------------------------------------------------------------
# Detection-style mAP
# ---------------------------------------------------------------------------


def box_iou(a: BoundingBox, b: BoundingBox) -> float:
    ix = max(0.0, min(a.x2, b.x2) - max(a.x1, b.x1))
    iy = max(0.0, min(a.y2, b.y2) - max(a.y1, b.y1))
    inter = ix * iy
    union = a.area + b.area - inter
    return inter / union if union > 0 else 0.0


def _group_truth(truth: list[LabeledFrame]):
    """Group ground truth by video, with sorted instant grids."""
    by_video: dict[str, dict[float, list[LabeledFrame]]] = {}
    for t in truth:
        by_video.setdefault(t.video_id, {}).setdefault(t.timestamp, []).append(t)
    grids = {v: np.array(sorted(inst)) for v, inst in by_video.items()}
    return by_video, grids


def _snap_to_grid(video_id, timestamp, grids):
    if video_id not in grids:
        raise ValidationError(f"prediction for unknown video {video_id!r}")
    grid = grids[video_id]
    i = int(np.searchsorted(grid, timestamp))
    best = None
    for j in (i - 1, i):
        if 0 <= j < grid.size:
            if best is None or abs(grid[j] - timestamp) < abs(best - timestamp):
                best = grid[j]
    if best is None or abs(best - timestamp) > GRID_TOLERANCE:
        raise ValidationError(
            f"prediction at {video_id}:{timestamp} is off the ground-truth "
            f"instant grid by more than {GRID_TOLERANCE:.4f} s"
        )
    return float(best)


def activitynet_map(
    truth: list[LabeledFrame], predictions: list[ScoredFrame], audible_only: bool = True
) -> float:
    """Average precision of speaking-face detections.

    Predictions are ranked by descending score and greedily matched to
    unmatched ground-truth boxes at the same (video, instant) with IoU of
    at least 0.5; a match to a speaking box is a true positive, anything
    else a false positive. AP integrates the interpolated precision
    envelope over recall (all-points rule). Unmatched speaking boxes
    count as misses.
    """
    by_video, grids = _group_truth(truth)
    positive = {SpeakLabel.SPEAKING_AUDIBLE}
    if not audible_only:
        positive.add(SpeakLabel.SPEAKING_NOT_AUDIBLE)
    total_pos = sum(1 for t in truth if t.label in positive)
    if total_pos == 0:
        raise ValidationError("mAP undefined: ground truth has no positives")
    ranked = sorted(
        predictions, key=lambda p: (-p.score, p.video_id, p.timestamp, p.box.x1)
    )
    matched: set[int] = set()
    flags = []
    for pred in ranked:
        instant = _snap_to_grid(pred.video_id, pred.timestamp, grids)
        candidates = by_video[pred.video_id][instant]
        best_iou, best = 0.0, None
        for gt in candidates:
            if id(gt) in matched:
                continue
            iou = box_iou(pred.box, gt.box)
            if iou >= MAP_IOU_THRESHOLD and iou > best_iou:
                best_iou, best = iou, gt
        if best is not None:
            matched.add(id(best))
            flags.append(best.label in positive)
        else:
            flags.append(False)
    if not flags:
        return 0.0
    tp = np.cumsum(flags)
    ranks = np.arange(1, len(flags) + 1)
    precision = tp / ranks
    recall = tp / total_pos
    # Interpolated precision: running maximum from the right.
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    ap = 0.0
    prev_recall = 0.0
    for i in range(len(flags)):
        if flags[i]:
            ap += (recall[i] - prev_recall) * envelope[i]
            prev_recall = recall[i]
    return float(ap)


# ---------------------------------------------------------------------------
# Whole-track inference
# ---------------------------------------------------------------------------


def score_frames(
    params, spec: ModelSpec, crops: np.ndarray, mels: np.ndarray, chunk_frames: int = 120
) -> np.ndarray:
    """Speaking probability per frame of one track.

    ``crops``: (N,128,128) in [0,1] or uint8; ``mels``: (N,64,48). For
    recurrent heads the state persists across chunks, so the result is
    identical to a single whole-track pass.
    """
    n = len(crops)
    if n == 0:
        raise ValidationError("empty track")
    if len(mels) != n:
        raise ValidationError("crops/mels length mismatch")
    scores = np.empty(n, dtype=np.float64)
    state = None
    for s in range(0, n, chunk_frames):
        e = min(s + chunk_frames, n)
        visual = None
        audio = None
        if spec.uses_visual:
            idx = np.clip(
                np.arange(s, e)[:, None] + np.arange(-spec.stack_size + 1, 1)[None, :],
                0,
                n - 1,
            )
            visual = np.moveaxis(crops[idx], 1, -1).astype(np.float32)[None]
            if crops.dtype == np.uint8:
                visual = visual / np.float32(255.0)
        if spec.uses_audio:
            audio = np.asarray(mels[s:e], dtype=np.float32)[None]
        out = forward(params, spec, visual=visual, audio=audio, state=state)
        state = out["state"]
        scores[s:e] = out["fused"][0, :, 1]
    return scores


def score_track(
    params,
    spec: ModelSpec,
    track,
    timeline,
    crops: np.ndarray,
    mels: np.ndarray,
    frame_width_px: float | None = None,
    chunk_frames: int = 120,
) -> list[ScoredFrame]:
    """Score every frame of a track against its label timeline."""
    probs = score_frames(params, spec, crops, mels, chunk_frames)
    out = []
    for i, tf in enumerate(track.frames):
        width = tf.box.width * frame_width_px if frame_width_px is not None else None
        out.append(
            ScoredFrame(
                video_id=track.video_id,
                timestamp=tf.timestamp,
                box=tf.box,
                score=float(probs[i]),
                label=timeline.label_at(tf.timestamp),
                track_id=track.track_id,
                face_width_px=width,
            )
        )
    return out


# ---------------------------------------------------------------------------
# Reports and prediction files
# ---------------------------------------------------------------------------


@dataclass
class EvalReport:
    auroc: float
    balanced_acc: float
    roc: list[tuple[float, float]] = field(default_factory=list)
    by_condition: dict[str, dict] | None = None
    by_size: dict[str, dict] | None = None
    map_score: float | None = None

    def to_dict(self) -> dict:
        return {
            "auroc": self.auroc,
            "balanced_accuracy": self.balanced_acc,
            "roc_points": [list(p) for p in self.roc],
            "by_condition": self.by_condition,
            "by_size": self.by_size,
            "map": self.map_score,
        }

    def render(self) -> str:
        lines = [
            f"auROC:             {self.auroc:.4f}",
            f"balanced accuracy: {self.balanced_acc:.4f}",
        ]
        for title, buckets in (("condition", self.by_condition), ("size", self.by_size)):
            if buckets:
                lines.append(f"by {title}:")
                for name, info in buckets.items():
                    acc = info["balanced_accuracy"]
                    shown = f"{acc:.4f}" if acc is not None else "undefined"
                    lines.append(f"  {name:8s} {shown}  (n={info['count']})")
        if self.map_score is not None:
            lines.append(f"mAP:               {self.map_score:.4f}")
        return "\n".join(lines) + "\n"


def evaluate(
    frames,
    truth: list[LabeledFrame] | None = None,
    threshold: float = THRESHOLD_DEFAULT,
    audible_only: bool = True,
) -> EvalReport:
    """Assemble the full report; bucket breakdowns appear when every frame
    carries the needed attribute, mAP when ground-truth boxes are given."""
    frames = list(frames)
    report = EvalReport(
        auroc=roc_auc(frames, audible_only),
        balanced_acc=balanced_accuracy(frames, threshold, audible_only),
        roc=roc_points(frames, audible_only),
    )
    if all(f.condition is not None for f in frames):
        report.by_condition = bucketed_metrics(frames, "condition", threshold, audible_only)
    if all(f.face_width_px is not None for f in frames):
        report.by_size = bucketed_metrics(frames, "size", threshold, audible_only)
    if truth is not None:
        report.map_score = activitynet_map(truth, frames, audible_only)
    return report


def attach_conditions(frames: list[ScoredFrame], segments) -> list[ScoredFrame]:
    """Tag each frame with the speech condition active at its instant."""
    by_video: dict[str, list] = {}
    for seg in segments:
        by_video.setdefault(seg.video_id, []).append(seg)
    out = []
    for f in frames:
        cond = SpeechCondition.NO_SPEECH
        for seg in by_video.get(f.video_id, ()):
            if seg.start <= f.timestamp < seg.end:
                cond = seg.condition
                break
        out.append(
            ScoredFrame(
                video_id=f.video_id,
                timestamp=f.timestamp,
                box=f.box,
                score=f.score,
                label=f.label,
                track_id=f.track_id,
                condition=cond,
                face_width_px=f.face_width_px,
            )
        )
    return out


def serialize_predictions(frames: list[ScoredFrame], threshold: float = THRESHOLD_DEFAULT) -> str:
    """9-field CSV: label CSV layout with score + predicted label appended
    in place of the label field."""
    rows = sorted(frames, key=lambda f: (f.video_id, f.track_id, f.timestamp))
    lines = []
    for f in rows:
        predicted = (
            SpeakLabel.SPEAKING_AUDIBLE if f.score >= threshold else SpeakLabel.NOT_SPEAKING
        )
        lines.append(
            ",".join(
                [
                    f.video_id,
                    format_float(f.timestamp),
                    format_float(f.box.x1),
                    format_float(f.box.y1),
                    format_float(f.box.x2),
                    format_float(f.box.y2),
                    format_float(f.score),
                    predicted.value,
                    f.track_id,
                ]
            )
        )
    return "".join(line + "\n" for line in lines)


def parse_prediction_csv(text: str, labels: dict[str, SpeakLabel] | None = None) -> list[ScoredFrame]:
    """Parse the 9-field prediction CSV.

    Ground-truth labels are not stored in prediction files; pass a map of
    "video_id,timestamp,track_id" keys to labels to restore them, else
    frames carry the predicted label.
    """
    out = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 9:
            raise ParseError(f"expected 9 fields, got {len(parts)}", lineno)
        vid, ts, x1, y1, x2, y2, score, label, track_id = parts
        try:
            timestamp = float(ts)
            box = BoundingBox(float(x1), float(y1), float(x2), float(y2))
            parsed_score = float(score)
            parsed_label = SpeakLabel.from_string(label)
        except (ValueError, ValidationError) as err:
            raise ParseError(str(err), lineno) from None
        key = f"{vid},{ts},{track_id}"
        if labels is not None:
            if key not in labels:
                raise ParseError(f"no ground-truth label for {key}", lineno)
            parsed_label = labels[key]
        out.append(
            ScoredFrame(
                video_id=vid,
                timestamp=timestamp,
                box=box,
                score=parsed_score,
                label=parsed_label,
                track_id=track_id,
            )
        )
    return out
