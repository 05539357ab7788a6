"""Corpus analytics over label files: segment statistics, concurrency,
inter-annotator agreement, speech-activity overlap, and action-label
co-occurrence."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .errors import ParseError, ValidationError
from .labels import FaceTrack, LabelTimeline, SpeakLabel


# ---------------------------------------------------------------------------
# Segment statistics
# ---------------------------------------------------------------------------

DEFAULT_DURATION_BINS = np.logspace(np.log10(0.01), np.log10(100.0), 41)


@dataclass(frozen=True)
class LabelStats:
    total_time_h: float
    segment_count: int
    mean_duration_s: float
    histogram: tuple[int, ...]  # counts per duration bin


@dataclass(frozen=True)
class SegmentStats:
    per_label: dict[SpeakLabel, LabelStats]
    duration_bins: tuple[float, ...]

    def to_dict(self) -> dict:
        return {
            "duration_bins": list(self.duration_bins),
            "labels": {
                lab.value: {
                    "total_time_h": s.total_time_h,
                    "segment_count": s.segment_count,
                    "mean_duration_s": s.mean_duration_s,
                    "histogram": list(s.histogram),
                }
                for lab, s in self.per_label.items()
            },
        }

    def render(self) -> str:
        lines = [f"{'Label':<22}{'Time (h)':>10}{'Segments':>10}{'Mean (s)':>10}"]
        for lab, s in self.per_label.items():
            lines.append(
                f"{lab.value:<22}{s.total_time_h:>10.2f}"
                f"{s.segment_count:>10d}{s.mean_duration_s:>10.2f}"
            )
        return "\n".join(lines)


def segment_statistics(
    timelines: Iterable[LabelTimeline],
    duration_bins: Sequence[float] | None = None,
) -> SegmentStats:
    bins = np.asarray(duration_bins if duration_bins is not None else DEFAULT_DURATION_BINS)
    durations: dict[SpeakLabel, list[float]] = {lab: [] for lab in SpeakLabel}
    for tl in timelines:
        for seg in tl.segments:
            durations[seg.label].append(seg.duration)
    per_label = {}
    for lab, ds in durations.items():
        arr = np.asarray(ds)
        count = len(ds)
        # Clip into the binned range so histogram mass equals segment count.
        hist = (
            np.histogram(np.clip(arr, bins[0], bins[-1]), bins=bins)[0]
            if count
            else np.zeros(len(bins) - 1, int)
        )
        per_label[lab] = LabelStats(
            total_time_h=float(arr.sum()) / 3600.0 if count else 0.0,
            segment_count=count,
            mean_duration_s=float(arr.mean()) if count else 0.0,
            histogram=tuple(int(c) for c in hist),
        )
    return SegmentStats(per_label=per_label, duration_bins=tuple(float(b) for b in bins))


# ---------------------------------------------------------------------------
# Concurrency / face size
# ---------------------------------------------------------------------------


def track_interval(track: FaceTrack) -> tuple[float, float]:
    return (track.start, track.start + track.duration)


def concurrency_profile(
    tracks: Iterable[FaceTrack | tuple[float, float]]
) -> dict[int, float]:
    """Sweep-line partition of time by the number of simultaneously active tracks."""
    intervals = [
        track_interval(t) if isinstance(t, FaceTrack) else (float(t[0]), float(t[1]))
        for t in tracks
    ]
    events: list[tuple[float, int]] = []
    for s, e in intervals:
        events.append((s, +1))
        events.append((e, -1))
    events.sort()
    profile: dict[int, float] = {}
    active = 0
    prev: float | None = None
    for t, delta in events:
        if prev is not None and active > 0 and t > prev:
            profile[active] = profile.get(active, 0.0) + (t - prev)
        active += delta
        prev = t
    return profile


def face_width_histogram(
    tracks: Iterable[FaceTrack],
    frame_width_px: float,
    bin_width_px: float = 20.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Histogram of per-frame face widths in pixels; returns (counts, edges)."""
    widths = np.asarray(
        [f.box.width * frame_width_px for t in tracks for f in t.frames]
    )
    top = float(widths.max()) if widths.size else bin_width_px
    edges = np.arange(0.0, top + bin_width_px, bin_width_px)
    counts, edges = np.histogram(widths, bins=edges)
    return counts, edges


# ---------------------------------------------------------------------------
# Fleiss' kappa
# ---------------------------------------------------------------------------


def fleiss_kappa(matrix: np.ndarray | Sequence[Sequence[int]]) -> float:
    """Fleiss (1971) agreement statistic over an items x categories count matrix.

    Every row must sum to the same rater count n >= 2. The degenerate case
    where all ratings land in one category (expected agreement 1) is defined
    as perfect agreement, kappa = 1.0.
    """
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2 or m.shape[0] < 2:
        raise ValidationError("rating matrix needs >= 2 items")
    row_sums = m.sum(axis=1)
    n = row_sums[0]
    if n < 2:
        raise ValidationError("need >= 2 raters per item")
    if not np.all(row_sums == n):
        raise ValidationError("rows must all sum to the same rater count")
    n_items = m.shape[0]
    p_i = (np.square(m).sum(axis=1) - n) / (n * (n - 1))
    p_bar = p_i.mean()
    p_j = m.sum(axis=0) / (n_items * n)
    p_e = float(np.square(p_j).sum())
    if abs(1.0 - p_e) < 1e-15:
        return 1.0
    return float((p_bar - p_e) / (1.0 - p_e))


# ---------------------------------------------------------------------------
# Speech-activity overlap
# ---------------------------------------------------------------------------


class SpeechCondition(Enum):
    NO_SPEECH = "NO_SPEECH"
    CLEAN = "CLEAN"
    SPEECH_WITH_MUSIC = "SPEECH_WITH_MUSIC"
    SPEECH_WITH_NOISE = "SPEECH_WITH_NOISE"

    @property
    def is_speech(self) -> bool:
        return self is not SpeechCondition.NO_SPEECH


@dataclass(frozen=True)
class SpeechSegment:
    video_id: str
    start: float
    end: float
    condition: SpeechCondition


def parse_speech_csv(text: str) -> list[SpeechSegment]:
    """CSV rows: video_id,start,end,condition."""
    out = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise ParseError(f"expected 4 fields, got {len(parts)}", lineno)
        vid, s, e, cond = parts
        try:
            out.append(SpeechSegment(vid, float(s), float(e), SpeechCondition(cond)))
        except ValueError as err:
            raise ParseError(str(err), lineno) from None
    return out


@dataclass
class OverlapReport:
    speech_with_speaker: float = 0.0
    speech_without_speaker: float = 0.0
    speaker_without_speech: float = 0.0
    neither: float = 0.0
    # Per-condition split of the two speech cases.
    with_speaker_by_condition: dict[SpeechCondition, float] = field(default_factory=dict)
    without_speaker_by_condition: dict[SpeechCondition, float] = field(default_factory=dict)

    @property
    def total(self) -> float:
        return (
            self.speech_with_speaker
            + self.speech_without_speaker
            + self.speaker_without_speech
            + self.neither
        )

    def to_dict(self) -> dict:
        return {
            "speech_with_speaker_s": self.speech_with_speaker,
            "speech_without_speaker_s": self.speech_without_speaker,
            "speaker_without_speech_s": self.speaker_without_speech,
            "neither_s": self.neither,
            "with_speaker_by_condition": {
                c.value: d for c, d in self.with_speaker_by_condition.items()
            },
            "without_speaker_by_condition": {
                c.value: d for c, d in self.without_speaker_by_condition.items()
            },
        }


def speech_overlap_report(
    speaker_timelines: Iterable[tuple[str, LabelTimeline]],
    speech_segments: Iterable[SpeechSegment],
    span: tuple[float, float],
    video_id: str | None = None,
) -> OverlapReport:
    """Decompose a time span by (speech audible?) x (visible audible speaker?).

    speaker_timelines pairs each timeline with its video id; all streams
    must belong to one video. A speaker is active when any face timeline
    carries SPEAKING_AUDIBLE; SPEAKING_NOT_AUDIBLE does not count.
    """
    timelines = list(speaker_timelines)
    segments = list(speech_segments)
    vids = {v for v, _ in timelines} | {s.video_id for s in segments}
    if video_id is not None:
        vids.add(video_id)
    if len(vids) > 1:
        raise ValidationError(f"label streams from different videos: {sorted(vids)}")

    lo, hi = span
    if not hi > lo:
        raise ValidationError("empty analysis span")
    points = {lo, hi}
    for _, tl in timelines:
        for seg in tl.segments:
            points.update((seg.start, seg.end))
    for s in segments:
        points.update((s.start, s.end))
    points = sorted(p for p in points if lo <= p <= hi)

    report = OverlapReport()
    for a, b in zip(points, points[1:]):
        mid = (a + b) / 2.0
        dur = b - a
        cond = next(
            (s.condition for s in segments if s.start <= mid < s.end and s.condition.is_speech),
            None,
        )
        speaker = any(
            tl.start <= mid < tl.end and tl.label_at(mid) is SpeakLabel.SPEAKING_AUDIBLE
            for _, tl in timelines
        )
        if cond is not None and speaker:
            report.speech_with_speaker += dur
            d = report.with_speaker_by_condition
            d[cond] = d.get(cond, 0.0) + dur
        elif cond is not None:
            report.speech_without_speaker += dur
            d = report.without_speaker_by_condition
            d[cond] = d.get(cond, 0.0) + dur
        elif speaker:
            report.speaker_without_speech += dur
        else:
            report.neither += dur
    return report


# ---------------------------------------------------------------------------
# Action label co-occurrence
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CooccurrenceReport:
    # action -> SpeakLabel -> percentage of resolvable points
    percentages: dict[str, dict[SpeakLabel, float]]
    unresolved: dict[str, int]

    def to_dict(self) -> dict:
        return {
            "percentages": {
                a: {lab.value: p for lab, p in row.items()}
                for a, row in self.percentages.items()
            },
            "unresolved": dict(self.unresolved),
        }

    def render(self) -> str:
        header = f"{'Action':<22}" + "".join(f"{lab.value:>24}" for lab in SpeakLabel)
        lines = [header + f"{'Unresolved':>12}"]
        actions = sorted(set(self.percentages) | set(self.unresolved))
        for action in actions:
            row = self.percentages.get(action, {})
            cells = "".join(f"{row.get(lab, 0.0):>23.1f}%" for lab in SpeakLabel)
            lines.append(f"{action:<22}{cells}{self.unresolved.get(action, 0):>12d}")
        return "\n".join(lines)


def action_cooccurrence(
    point_labels: Iterable[tuple[str, float, str]],
    timelines: dict[str, LabelTimeline],
) -> CooccurrenceReport:
    """Distribution of speaker labels under each action's point annotations.

    Points whose (track_id, timestamp) cannot be resolved to a covering
    timeline are counted separately and excluded from the percentages.
    """
    counts: dict[str, dict[SpeakLabel, int]] = {}
    unresolved: dict[str, int] = {}
    for track_id, ts, action in point_labels:
        tl = timelines.get(track_id)
        if tl is None or not tl.start <= ts <= tl.end:
            unresolved[action] = unresolved.get(action, 0) + 1
            continue
        row = counts.setdefault(action, {lab: 0 for lab in SpeakLabel})
        row[tl.label_at(ts)] += 1
    percentages = {}
    for action, row in counts.items():
        total = sum(row.values())
        percentages[action] = {lab: 100.0 * c / total for lab, c in row.items()}
    return CooccurrenceReport(percentages=percentages, unresolved=unresolved)


# ---------------------------------------------------------------------------
# Overlapping speakers
# ---------------------------------------------------------------------------


def overlapping_speaker_instants(
    timelines: Iterable[LabelTimeline],
) -> list[tuple[float, float, int]]:
    """Maximal intervals where >= 2 faces are SPEAKING_AUDIBLE at once.

    Returns (start, end, count) per constant-count interval, in time order.
    """
    events: list[tuple[float, int]] = []
    for tl in timelines:
        for seg in tl.segments:
            if seg.label is SpeakLabel.SPEAKING_AUDIBLE:
                events.append((seg.start, +1))
                events.append((seg.end, -1))
    events.sort()
    out: list[tuple[float, float, int]] = []
    active = 0
    prev: float | None = None
    for t, delta in events:
        if prev is not None and active >= 2 and t > prev:
            if out and out[-1][1] == prev and out[-1][2] == active:
                out[-1] = (out[-1][0], t, active)
            else:
                out.append((prev, t, active))
        active += delta
        prev = t
    return out
