"""Canonical track/label data model and the 8-field CSV interchange format.

One CSV line per labeled face frame, no header:

    video_id,timestamp,x1,y1,x2,y2,label,track_id

Coordinates are normalized to [0, 1]; timestamps are seconds rendered with
exactly six decimal places. All values are immutable after construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

from .errors import ParseError, ValidationError

DEFAULT_FRAME_RATE = 20.0

# Coordinates this far outside [0,1] are treated as float round-trip noise
# and clamped; anything worse is rejected.
COORD_CLAMP_TOL = 1e-6


class SpeakLabel(Enum):
    NOT_SPEAKING = "NOT_SPEAKING"
    SPEAKING_AUDIBLE = "SPEAKING_AUDIBLE"
    SPEAKING_NOT_AUDIBLE = "SPEAKING_NOT_AUDIBLE"

    @classmethod
    def from_string(cls, s: str) -> "SpeakLabel":
        try:
            return cls(s)
        except ValueError:
            raise ParseError(f"unknown label string {s!r}") from None


@dataclass(frozen=True)
class BoundingBox:
    """Normalized box: 0 <= x1 < x2 <= 1 and 0 <= y1 < y2 <= 1."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        for name in ("x1", "y1", "x2", "y2"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValidationError(f"non-finite coordinate {name}={v}")
            if v < -COORD_CLAMP_TOL or v > 1.0 + COORD_CLAMP_TOL:
                raise ValidationError(f"coordinate {name}={v} outside [0,1]")
            object.__setattr__(self, name, min(1.0, max(0.0, v)))
        if not self.x1 < self.x2:
            raise ValidationError(f"box requires x1 < x2, got {self.x1} >= {self.x2}")
        if not self.y1 < self.y2:
            raise ValidationError(f"box requires y1 < y2, got {self.y1} >= {self.y2}")

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height


@dataclass(frozen=True)
class LabeledFrame:
    video_id: str
    timestamp: float
    box: BoundingBox
    label: SpeakLabel
    track_id: str

    def __post_init__(self):
        if self.timestamp < 0:
            raise ValidationError(f"negative timestamp {self.timestamp}")
        if not self.track_id:
            raise ValidationError("empty track_id")


@dataclass(frozen=True)
class TrackFrame:
    """One frame of a FaceTrack; detected=False marks gap-filled boxes."""

    timestamp: float
    box: BoundingBox
    detected: bool = True


@dataclass(frozen=True)
class FaceTrack:
    track_id: str
    video_id: str
    frames: tuple[TrackFrame, ...]
    frame_rate: float = DEFAULT_FRAME_RATE

    def __post_init__(self):
        if not self.frames:
            raise ValidationError(f"track {self.track_id}: no frames")
        object.__setattr__(self, "frames", tuple(self.frames))
        period = 1.0 / self.frame_rate
        ts = [f.timestamp for f in self.frames]
        for a, b in zip(ts, ts[1:]):
            if abs((b - a) - period) > 1e-6:
                raise ValidationError(
                    f"track {self.track_id}: non-uniform frame spacing "
                    f"{b - a:.6f}s (expected {period:.6f}s)"
                )

    @property
    def start(self) -> float:
        return self.frames[0].timestamp

    @property
    def end(self) -> float:
        return self.frames[-1].timestamp

    @property
    def duration(self) -> float:
        """Span including half a frame period on each side."""
        return self.end - self.start + 1.0 / self.frame_rate

    def __len__(self) -> int:
        return len(self.frames)


@dataclass(frozen=True)
class Segment:
    start: float
    end: float
    label: SpeakLabel

    @property
    def duration(self) -> float:
        return self.end - self.start


@dataclass(frozen=True)
class LabelTimeline:
    """Contiguous, non-overlapping segments covering the whole track."""

    track_id: str
    segments: tuple[Segment, ...]

    def __post_init__(self):
        if not self.segments:
            raise ValidationError(f"timeline {self.track_id}: no segments")
        object.__setattr__(self, "segments", tuple(self.segments))
        for seg in self.segments:
            if not seg.end > seg.start:
                raise ValidationError(
                    f"timeline {self.track_id}: empty segment [{seg.start}, {seg.end}]"
                )
        for a, b in zip(self.segments, self.segments[1:]):
            if abs(a.end - b.start) > 1e-9:
                raise ValidationError(
                    f"timeline {self.track_id}: gap/overlap between "
                    f"{a.end} and {b.start}"
                )

    @property
    def start(self) -> float:
        return self.segments[0].start

    @property
    def end(self) -> float:
        return self.segments[-1].end

    def label_at(self, t: float) -> SpeakLabel:
        """Label covering time t; segment intervals are [start, end)."""
        if not self.start <= t <= self.end:
            raise ValidationError(f"time {t} outside timeline [{self.start}, {self.end}]")
        for seg in self.segments:
            if t < seg.end:
                return seg.label
        return self.segments[-1].label


# ---------------------------------------------------------------------------
# CSV interchange
# ---------------------------------------------------------------------------


def _parse_float(s: str, what: str, line: int) -> float:
    try:
        return float(s)
    except ValueError:
        raise ParseError(f"non-numeric {what} {s!r}", line) from None


def parse_label_csv(text: str) -> dict[str, list[LabeledFrame]]:
    """Parse label CSV into frames grouped by track_id (input order kept).

    Raises ParseError for malformed lines and ValidationError for invariant
    violations; both name the offending line.
    """
    by_track: dict[str, list[LabeledFrame]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 8:
            raise ParseError(f"expected 8 fields, got {len(parts)}", lineno)
        video_id, ts_s, x1_s, y1_s, x2_s, y2_s, label_s, track_id = parts
        ts = _parse_float(ts_s, "timestamp", lineno)
        coords = [
            _parse_float(v, n, lineno)
            for v, n in ((x1_s, "x1"), (y1_s, "y1"), (x2_s, "x2"), (y2_s, "y2"))
        ]
        try:
            frame = LabeledFrame(
                video_id=video_id,
                timestamp=ts,
                box=BoundingBox(coords[0], coords[1], coords[2], coords[3]),
                label=SpeakLabel.from_string(label_s),
                track_id=track_id,
            )
        except ParseError as e:
            raise ParseError(str(e), lineno) from None
        except ValidationError as e:
            raise ValidationError(f"line {lineno}: {e}") from None
        by_track.setdefault(track_id, []).append(frame)
    for track_id, frames in by_track.items():
        for a, b in zip(frames, frames[1:]):
            if not b.timestamp > a.timestamp:
                raise ValidationError(
                    f"track {track_id}: timestamps not strictly increasing "
                    f"({a.timestamp} -> {b.timestamp})"
                )
    return by_track


def format_float(v: float) -> str:
    """Canonical 6-decimal rendering used by every CSV emitted here."""
    return f"{v:.6f}"


def format_frame(frame: LabeledFrame) -> str:
    b = frame.box
    return (
        f"{frame.video_id},{format_float(frame.timestamp)},"
        f"{format_float(b.x1)},{format_float(b.y1)},"
        f"{format_float(b.x2)},{format_float(b.y2)},"
        f"{frame.label.value},{frame.track_id}"
    )


def serialize_labels(frames: Iterable[LabeledFrame]) -> str:
    """Render frames as canonical CSV sorted by (video_id, track_id, timestamp)."""
    frames = list(frames)
    ordered = sorted(frames, key=lambda f: (f.video_id, f.track_id, f.timestamp))
    return "".join(format_frame(f) + "\n" for f in ordered)


def timeline_from_frames(
    frames: Sequence[LabeledFrame], frame_rate: float = DEFAULT_FRAME_RATE
) -> LabelTimeline:
    """Collapse per-frame labels into maximal same-label segments.

    Boundaries between differing labels sit at the midpoint of the adjacent
    frame timestamps; the track endpoints are extended by half a frame
    period so every frame carries the same duration.
    """
    if not frames:
        raise ValidationError("no frames")
    period = 1.0 / frame_rate
    ts = [f.timestamp for f in frames]
    for a, b in zip(ts, ts[1:]):
        if abs((b - a) - period) > 1e-6:
            raise ValidationError(
                f"non-uniform frame spacing {b - a:.6f}s (expected {period:.6f}s)"
            )
    half = period / 2.0
    segments: list[Segment] = []
    run_start = ts[0] - half
    run_label = frames[0].label
    for prev, cur in zip(frames, frames[1:]):
        if cur.label is not run_label:
            boundary = (prev.timestamp + cur.timestamp) / 2.0
            segments.append(Segment(run_start, boundary, run_label))
            run_start = boundary
            run_label = cur.label
    segments.append(Segment(run_start, ts[-1] + half, run_label))
    return LabelTimeline(track_id=frames[0].track_id, segments=tuple(segments))
