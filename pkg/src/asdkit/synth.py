"""Deterministic synthetic audiovisual clips with exact ground truth.

Each clip is a procedural face (oval, eyes, mouth rectangle) plus a 16 kHz
waveform. The four kinds cover the hard negatives that make audio and
video individually ambiguous: a silently moving mouth, off-screen speech,
and background music. For SPEAKING clips the mouth aperture follows the
audio amplitude envelope, and a random subset of syllables is muted in the
soundtrack while still articulated on camera (SPEAKING_NOT_AUDIBLE), so
only the audiovisual combination separates audible speech from everything
else.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .features import SAMPLE_RATE
from .labels import (
    DEFAULT_FRAME_RATE,
    BoundingBox,
    LabeledFrame,
    SpeakLabel,
    serialize_labels,
)

FRAME_SIZE = 96  # rendered frame side, px
SPEECH_GATE = 0.2  # labels flip where envelope exceeds this fraction of peak
ENVELOPE_POWER = 0.5  # |sin|^p syllable envelope; p<1 widens the audible span
MUTED_SYLLABLE_P = 0.4  # chance a mouthed syllable is absent from the soundtrack

FACE_SIZE_FRACTIONS = {"small": 0.3, "medium": 0.55, "large": 0.85}


class ClipKind(Enum):
    SPEAKING = "SPEAKING"
    SILENT_MOTION = "SILENT_MOTION"
    OFFSCREEN_SPEECH = "OFFSCREEN_SPEECH"
    STATIC_WITH_MUSIC = "STATIC_WITH_MUSIC"


@dataclass(frozen=True)
class ClipSpec:
    kind: ClipKind
    duration: float = 3.0
    seed: int = 0
    noise_level: float = 0.0
    face_size: str = "medium"

    def __post_init__(self):
        if not 1.0 <= self.duration <= 10.0:
            raise ValidationError(f"duration {self.duration}s outside [1, 10] s")
        if not 0.0 <= self.noise_level <= 1.0:
            raise ValidationError(f"noise_level {self.noise_level} outside [0, 1]")
        if self.face_size not in FACE_SIZE_FRACTIONS:
            raise ValidationError(
                f"face_size {self.face_size!r} not in {sorted(FACE_SIZE_FRACTIONS)}"
            )


@dataclass(frozen=True)
class SyntheticClip:
    spec: ClipSpec
    frames: np.ndarray  # (N, 96, 96) uint8
    waveform: np.ndarray  # (duration * 16000,) float32, starts 1/40 s before frame 0
    labels: tuple[SpeakLabel, ...]  # one per frame
    apertures: np.ndarray  # (N,) mouth openness in [0, 1]
    box: BoundingBox  # constant normalized face box
    timestamps: np.ndarray  # (N,) frame instants, first at 1/40 s

    def labeled_frames(self, video_id: str, track_id: str | None = None) -> list[LabeledFrame]:
        tid = track_id if track_id is not None else f"{video_id}:0"
        return [
            LabeledFrame(
                video_id=video_id,
                timestamp=float(t),
                box=self.box,
                label=label,
                track_id=tid,
            )
            for t, label in zip(self.timestamps, self.labels)
        ]


def _syllable_envelope(t: np.ndarray, rate: float, phase: float) -> np.ndarray:
    return np.abs(np.sin(np.pi * rate * t + phase)) ** ENVELOPE_POWER


def _syllable_index(t: np.ndarray, rate: float, phase: float) -> np.ndarray:
    """Which |sin| arch of the envelope each instant belongs to."""
    return np.floor(rate * t + phase / np.pi).astype(int)


def _audible_syllables(n: int, rng: np.random.Generator) -> np.ndarray:
    """Per-syllable audibility mask: muted syllables are mouthed on camera
    but missing from the soundtrack (dubbing-style), so video alone cannot
    tell them apart from audible ones. Always keeps at least one audible
    and, when there is room, at least one muted syllable."""
    audible = rng.random(n) >= MUTED_SYLLABLE_P
    if not audible.any():
        audible[int(rng.integers(n))] = True
    if audible.all() and n >= 3:
        audible[int(rng.integers(n))] = False
    return audible


def _speech_waveform(t: np.ndarray, rng: np.random.Generator, rate: float, phase: float):
    f0 = rng.uniform(110.0, 220.0)
    vibrato = 1.0 + 0.01 * np.sin(2 * np.pi * 5.0 * t)
    signal = np.zeros_like(t)
    for k in range(1, 6):
        signal += np.sin(2 * np.pi * k * f0 * vibrato * t + rng.uniform(0, 2 * np.pi)) / k
    return 0.3 * _syllable_envelope(t, rate, phase) * signal


def _music_waveform(t: np.ndarray, rng: np.random.Generator):
    chord = rng.choice([261.63, 329.63, 392.0, 523.25], size=3, replace=False)
    tremolo = 0.8 + 0.2 * np.sin(2 * np.pi * 1.5 * t + rng.uniform(0, 2 * np.pi))
    signal = sum(np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi)) for f in chord)
    return 0.1 * tremolo * signal


def _render_frame(aperture: float, size_frac: float) -> np.ndarray:
    """One grayscale face: oval, two eyes, mouth whose height = aperture."""
    img = np.full((FRAME_SIZE, FRAME_SIZE), 40.0)
    c = FRAME_SIZE / 2.0
    s = size_frac * FRAME_SIZE
    yy, xx = np.mgrid[0:FRAME_SIZE, 0:FRAME_SIZE] + 0.5
    face = ((xx - c) / (0.42 * s)) ** 2 + ((yy - c) / (0.5 * s)) ** 2 <= 1.0
    img[face] = 200.0
    for ex in (c - 0.18 * s, c + 0.18 * s):
        eye = (xx - ex) ** 2 + (yy - (c - 0.15 * s)) ** 2 <= (0.05 * s) ** 2
        img[eye] = 30.0
    mouth_h = max(aperture * 0.18 * s, 0.02 * s)
    mouth = (
        (np.abs(xx - c) <= 0.2 * s)
        & (np.abs(yy - (c + 0.22 * s)) <= mouth_h / 2.0)
        & face
    )
    img[mouth] = 20.0
    return img


def generate_clip(spec: ClipSpec) -> SyntheticClip:
    """Render one clip; everything derives from spec.seed."""
    rng = np.random.default_rng(spec.seed)
    fps = DEFAULT_FRAME_RATE
    n_frames = int(round(spec.duration * fps))
    n_samples = int(round(spec.duration * SAMPLE_RATE))
    # Frame instants sit at sample-period centers so the waveform starts
    # exactly half a frame period before the first frame.
    timestamps = (np.arange(n_frames) + 0.5) / fps
    t_audio = np.arange(n_samples) / SAMPLE_RATE

    rate = rng.uniform(2.0, 4.0)
    phase = rng.uniform(0.0, np.pi)
    kind = spec.kind

    if kind in (ClipKind.SPEAKING, ClipKind.OFFSCREEN_SPEECH):
        waveform = _speech_waveform(t_audio, rng, rate, phase)
    elif kind is ClipKind.STATIC_WITH_MUSIC:
        waveform = _music_waveform(t_audio, rng)
    else:  # SILENT_MOTION
        waveform = np.zeros(n_samples)

    n_syllables = int(_syllable_index(np.array([spec.duration]), rate, phase)[0]) + 1
    if kind is ClipKind.SPEAKING:
        # Mute a random subset of syllables in the soundtrack only: the
        # mouth still articulates them, so audibility is invisible.
        audible = _audible_syllables(n_syllables, rng)
        gate_audio = audible[np.clip(_syllable_index(t_audio, rate, phase), 0, n_syllables - 1)]
        waveform = waveform * gate_audio
    waveform = waveform + spec.noise_level * 0.01 * rng.normal(size=n_samples)

    envelope = _syllable_envelope(timestamps, rate, phase)
    if kind in (ClipKind.SPEAKING, ClipKind.SILENT_MOTION):
        apertures = envelope
    else:
        apertures = np.zeros(n_frames)

    if kind is ClipKind.SPEAKING:
        gate = SPEECH_GATE * envelope.max()
        syllables = np.clip(_syllable_index(timestamps, rate, phase), 0, n_syllables - 1)
        labels = tuple(
            (
                SpeakLabel.SPEAKING_AUDIBLE
                if audible[s]
                else SpeakLabel.SPEAKING_NOT_AUDIBLE
            )
            if e > gate
            else SpeakLabel.NOT_SPEAKING
            for e, s in zip(envelope, syllables)
        )
    else:
        labels = (SpeakLabel.NOT_SPEAKING,) * n_frames

    size_frac = FACE_SIZE_FRACTIONS[spec.face_size]
    frames = np.empty((n_frames, FRAME_SIZE, FRAME_SIZE), dtype=np.uint8)
    for i in range(n_frames):
        img = _render_frame(float(apertures[i]), size_frac)
        if spec.noise_level > 0:
            img = img + spec.noise_level * 40.0 * rng.normal(size=img.shape)
        frames[i] = np.clip(img, 0, 255).astype(np.uint8)

    half = size_frac / 2.0
    box = BoundingBox(0.5 - half, 0.5 - half, 0.5 + half, 0.5 + half)
    return SyntheticClip(
        spec=spec,
        frames=frames,
        waveform=waveform.astype(np.float32),
        labels=labels,
        apertures=apertures,
        box=box,
        timestamps=timestamps,
    )


@dataclass(frozen=True)
class CorpusClip:
    video_id: str
    spec: ClipSpec
    clip: SyntheticClip

    @property
    def track_id(self) -> str:
        return f"{self.video_id}:0"


def corpus_specs(
    n_per_kind: int, seed: int, duration: float = 3.0, noise_level: float = 0.1
) -> list[tuple[str, ClipSpec]]:
    """The deterministic (video_id, ClipSpec) layout of a corpus: kinds
    interleaved, face sizes cycled within each kind."""
    if n_per_kind < 1:
        raise ValidationError(f"n_per_kind must be >= 1, got {n_per_kind}")
    sizes = sorted(FACE_SIZE_FRACTIONS)
    out = []
    idx = 0
    for i in range(n_per_kind):
        for kind in ClipKind:
            spec = ClipSpec(
                kind=kind,
                duration=duration,
                seed=seed * 1_000_003 + idx,
                noise_level=noise_level,
                face_size=sizes[i % len(sizes)],
            )
            out.append((f"synth{idx:04d}", spec))
            idx += 1
    return out


def generate_corpus(
    n_per_kind: int,
    seed: int,
    duration: float = 3.0,
    noise_level: float = 0.1,
    out_dir: str | Path | None = None,
) -> list[CorpusClip]:
    """Generate a balanced corpus; optionally write it to disk.

    On-disk layout: ``labels.csv`` at the root plus one directory per
    clip holding ``frames.npy``, ``audio.npy``, and ``manifest.json``.
    """
    clips = [
        CorpusClip(video_id=vid, spec=spec, clip=generate_clip(spec))
        for vid, spec in corpus_specs(n_per_kind, seed, duration, noise_level)
    ]
    if out_dir is not None:
        write_corpus(clips, out_dir)
    return clips


def corpus_labels(clips: list[CorpusClip]) -> list[LabeledFrame]:
    frames: list[LabeledFrame] = []
    for c in clips:
        frames.extend(c.clip.labeled_frames(c.video_id, c.track_id))
    return frames


def write_corpus(clips: list[CorpusClip], out_dir: str | Path) -> None:
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    (root / "labels.csv").write_text(serialize_labels(corpus_labels(clips)))
    for c in clips:
        d = root / c.video_id
        d.mkdir(exist_ok=True)
        np.save(d / "frames.npy", c.clip.frames)
        np.save(d / "audio.npy", c.clip.waveform)
        manifest = {
            "video_id": c.video_id,
            "track_id": c.track_id,
            "kind": c.spec.kind.value,
            "duration": c.spec.duration,
            "seed": c.spec.seed,
            "noise_level": c.spec.noise_level,
            "face_size": c.spec.face_size,
            "frame_rate": DEFAULT_FRAME_RATE,
            "frame_size_px": FRAME_SIZE,
            "sample_rate": SAMPLE_RATE,
        }
        (d / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


def load_clip_media(media_dir: str | Path, video_id: str):
    """(frames, waveform) for one clip written by write_corpus."""
    d = Path(media_dir) / video_id
    if not d.is_dir():
        raise ValidationError(f"no media directory for video {video_id!r} under {media_dir}")
    return np.load(d / "frames.npy"), np.load(d / "audio.npy")
