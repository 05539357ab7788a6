"""Post-processing of raw face detections into labeling-ready tracks.

Two stages: short temporal gaps inside a track are filled with
Gaussian-kernel (Nadaraya-Watson) averages of the detected box corners,
then tracks are filtered/split to the 1-10 second length window.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ValidationError
from .labels import (
    DEFAULT_FRAME_RATE,
    BoundingBox,
    FaceTrack,
    LabeledFrame,
    SpeakLabel,
    TrackFrame,
)

MIN_TRACK_LEN_S = 1.0
MAX_TRACK_LEN_S = 10.0


@dataclass(frozen=True)
class RawDetectionTrack:
    """Detector output for one identity; may have missing frames."""

    track_id: str
    video_id: str
    detections: tuple[tuple[float, BoundingBox], ...]

    def __post_init__(self):
        object.__setattr__(self, "detections", tuple(self.detections))
        ts = [t for t, _ in self.detections]
        for a, b in zip(ts, ts[1:]):
            if not b > a:
                raise ValidationError(
                    f"track {self.track_id}: timestamps not strictly increasing"
                )


@dataclass(frozen=True)
class GapFillConfig:
    max_gap: float = 0.2  # missing spans at least this long split the track
    kernel_sigma: float = 0.1
    frame_rate: float = DEFAULT_FRAME_RATE

    def __post_init__(self):
        if self.max_gap <= 0:
            raise ValidationError("max_gap must be > 0")
        if self.kernel_sigma <= 0:
            raise ValidationError("kernel_sigma must be > 0")


def _kernel_average(
    t: float, points: list[tuple[float, BoundingBox]], sigma: float
) -> BoundingBox:
    """Nadaraya-Watson estimate of the four corners at time t."""
    lo, hi = t - 3 * sigma, t + 3 * sigma
    neigh = [(ti, b) for ti, b in points if lo <= ti <= hi]
    if not neigh:
        # Gap wider than the kernel support; fall back to the nearest box.
        neigh = [min(points, key=lambda p: abs(p[0] - t))]
    num = [0.0, 0.0, 0.0, 0.0]
    den = 0.0
    for ti, b in neigh:
        w = math.exp(-0.5 * ((ti - t) / sigma) ** 2)
        den += w
        for k, v in enumerate((b.x1, b.y1, b.x2, b.y2)):
            num[k] += w * v
    return BoundingBox(*(v / den for v in num))


def fill_track_gaps(track: RawDetectionTrack, cfg: GapFillConfig) -> list[FaceTrack]:
    """Fill sub-threshold gaps on the frame grid; split at larger gaps.

    Detected frames are copied verbatim; synthesized frames are flagged
    detected=False. Gap length is the missing span between consecutive
    detections, i.e. their time difference minus one frame period.
    """
    if not track.detections:
        raise ValidationError(f"track {track.track_id}: empty track")
    period = 1.0 / cfg.frame_rate

    # Partition detections at gaps >= max_gap.
    pieces: list[list[tuple[float, BoundingBox]]] = [[track.detections[0]]]
    for prev, cur in zip(track.detections, track.detections[1:]):
        gap = cur[0] - prev[0] - period
        if gap >= cfg.max_gap - 1e-9:
            pieces.append([])
        pieces[-1].append(cur)

    out: list[FaceTrack] = []
    for idx, piece in enumerate(pieces):
        t0 = piece[0][0]
        n = round((piece[-1][0] - t0) / period) + 1
        detected = {round((ti - t0) / period): b for ti, b in piece}
        if len(detected) != len(piece):
            raise ValidationError(
                f"track {track.track_id}: detections not on the {cfg.frame_rate} Hz grid"
            )
        frames = []
        for j in range(n):
            t = t0 + j * period
            if j in detected:
                frames.append(TrackFrame(t, detected[j], detected=True))
            else:
                box = _kernel_average(t, piece, cfg.kernel_sigma)
                frames.append(TrackFrame(t, box, detected=False))
        track_id = track.track_id if len(pieces) == 1 else f"{track.track_id}:{idx}"
        out.append(
            FaceTrack(
                track_id=track_id,
                video_id=track.video_id,
                frames=tuple(frames),
                frame_rate=cfg.frame_rate,
            )
        )
    return out


def enforce_length_bounds(
    tracks: list[FaceTrack],
    min_len: float = MIN_TRACK_LEN_S,
    max_len: float = MAX_TRACK_LEN_S,
) -> list[FaceTrack]:
    """Drop tracks under min_len; split tracks over max_len into chunks.

    A trailing remainder shorter than min_len is merged into the previous
    chunk; if that would push the chunk over max_len, the combined tail is
    re-split evenly so every output stays within [min_len, max_len].
    """
    out: list[FaceTrack] = []
    for track in tracks:
        fps = track.frame_rate
        n = len(track.frames)
        min_frames = math.ceil(min_len * fps - 1e-9)
        max_frames = math.floor(max_len * fps + 1e-9)
        if n < min_frames:
            continue
        if n <= max_frames:
            out.append(track)
            continue
        sizes = [max_frames] * (n // max_frames)
        rem = n - sum(sizes)
        if rem >= min_frames:
            sizes.append(rem)
        elif rem > 0:
            tail = sizes.pop() + rem
            a = (tail + 1) // 2
            sizes.extend([a, tail - a])
        offset = 0
        for k, size in enumerate(sizes):
            chunk = track.frames[offset : offset + size]
            out.append(
                FaceTrack(
                    track_id=f"{track.track_id}#{k}",
                    video_id=track.video_id,
                    frames=chunk,
                    frame_rate=fps,
                )
            )
            offset += size
    return out


def run_pipeline(
    raw_tracks: list[RawDetectionTrack], cfg: GapFillConfig | None = None
) -> list[FaceTrack]:
    cfg = cfg or GapFillConfig()
    filled: list[FaceTrack] = []
    for raw in raw_tracks:
        filled.extend(fill_track_gaps(raw, cfg))
    return enforce_length_bounds(filled)


# ---------------------------------------------------------------------------
# CSV adapters (pipeline I/O uses the module-1 interchange format)
# ---------------------------------------------------------------------------


def raw_tracks_from_frames(
    by_track: dict[str, list[LabeledFrame]]
) -> list[RawDetectionTrack]:
    return [
        RawDetectionTrack(
            track_id=track_id,
            video_id=frames[0].video_id,
            detections=tuple((f.timestamp, f.box) for f in frames),
        )
        for track_id, frames in by_track.items()
    ]


def tracks_to_frames(
    tracks: list[FaceTrack], label: SpeakLabel = SpeakLabel.NOT_SPEAKING
) -> list[LabeledFrame]:
    """Flatten tracks to CSV records with a placeholder label."""
    return [
        LabeledFrame(t.video_id, f.timestamp, f.box, label, t.track_id)
        for t in tracks
        for f in t.frames
    ]
