"""Model input featurization: grayscale face crops, Mel-spectrograms, and
3-second / 60-frame training windows.

Conventions fixed here: faces are 128x128 grayscale in [0,1]; audio is
16 kHz mono; each Mel feature is 64 bins x 48 frames over the 0.5 s of
audio preceding its anchor; labels attach to the most recent stacked frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .labels import FaceTrack, LabelTimeline, SpeakLabel

CROP_SIZE = 128
SAMPLE_RATE = 16000
MEL_BINS = 64
MEL_FRAMES = 48
MEL_WINDOW = 400  # 25 ms at 16 kHz
MEL_HOP = 160  # 10 ms; the only hop giving 48 frames over 0.5 s
MEL_SAMPLES = 8000  # 0.5 s
MEL_FLOOR = 1e-3
MEL_FMIN = 125.0
MEL_FMAX = 7500.0
LOG_FLOOR = float(np.log(MEL_FLOOR))

WINDOW_FRAMES = 60  # 3 s at 20 FPS
WINDOW_OVERLAP_FRAMES = 20  # 1 s

LUMA = np.array([0.299, 0.587, 0.114])


# ---------------------------------------------------------------------------
# Face crops
# ---------------------------------------------------------------------------


def _to_gray_unit(frame: np.ndarray) -> np.ndarray:
    img = np.asarray(frame)
    if img.dtype == np.uint8:
        img = img.astype(np.float64) / 255.0
    else:
        img = img.astype(np.float64)
    if img.ndim == 3:
        img = img @ LUMA
    elif img.ndim != 2:
        raise ValidationError(f"expected (H,W) or (H,W,3) frame, got shape {img.shape}")
    return img


def _sample_axis(start_px: float, extent_px: float, src_len: int, out_len: int):
    # Output pixel centers mapped into source coordinates (half-pixel convention).
    pos = start_px + (np.arange(out_len) + 0.5) * (extent_px / out_len) - 0.5
    pos = np.clip(pos, 0.0, src_len - 1.0)
    i0 = np.floor(pos).astype(int)
    i1 = np.minimum(i0 + 1, src_len - 1)
    frac = pos - i0
    return i0, i1, frac


def crop_face(frame: np.ndarray, box) -> np.ndarray:
    """Crop the normalized box and resize to 128x128 grayscale in [0,1].

    Bilinear interpolation, aspect ratio squashed to square. Raises if the
    box collapses to zero pixels in either dimension.
    """
    img = _to_gray_unit(frame)
    h, w = img.shape
    bw_px = box.width * w
    bh_px = box.height * h
    if round(bw_px) < 1 or round(bh_px) < 1:
        raise ValidationError(f"degenerate box: {bw_px:.3f} x {bh_px:.3f} px")
    xi0, xi1, xf = _sample_axis(box.x1 * w, bw_px, w, CROP_SIZE)
    yi0, yi1, yf = _sample_axis(box.y1 * h, bh_px, h, CROP_SIZE)
    top = img[np.ix_(yi0, xi0)] * (1 - xf) + img[np.ix_(yi0, xi1)] * xf
    bot = img[np.ix_(yi1, xi0)] * (1 - xf) + img[np.ix_(yi1, xi1)] * xf
    out = top * (1 - yf)[:, None] + bot * yf[:, None]
    return np.clip(out, 0.0, 1.0)


def make_face_stack(crops: np.ndarray, j: int, m: int) -> np.ndarray:
    """Stack crops[j-m+1 .. j] along the channel axis, oldest first.

    Indices before the start of the track are edge-padded with crop 0.
    Returns (128, 128, m) float32 in [0,1] regardless of storage dtype.
    """
    if m < 1:
        raise ValidationError(f"stack depth must be >= 1, got {m}")
    n = len(crops)
    if not 0 <= j < n:
        raise ValidationError(f"frame index {j} outside track of {n} frames")
    idx = np.maximum(np.arange(j - m + 1, j + 1), 0)
    stack = np.moveaxis(crops[idx], 0, -1).astype(np.float32)
    if crops.dtype == np.uint8:
        stack /= 255.0
    return stack


# ---------------------------------------------------------------------------
# Mel spectrogram
# ---------------------------------------------------------------------------


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)


def mel_filter_centers() -> np.ndarray:
    """Center frequencies (Hz) of the 64 triangular filters."""
    mels = np.linspace(_hz_to_mel(MEL_FMIN), _hz_to_mel(MEL_FMAX), MEL_BINS + 2)
    return _mel_to_hz(mels)[1:-1]


def _filterbank() -> np.ndarray:
    edges = _mel_to_hz(
        np.linspace(_hz_to_mel(MEL_FMIN), _hz_to_mel(MEL_FMAX), MEL_BINS + 2)
    )
    freqs = np.fft.rfftfreq(MEL_WINDOW, d=1.0 / SAMPLE_RATE)
    fb = np.zeros((MEL_BINS, freqs.size))
    for b in range(MEL_BINS):
        lo, c, hi = edges[b], edges[b + 1], edges[b + 2]
        up = (freqs - lo) / (c - lo)
        down = (hi - freqs) / (hi - c)
        fb[b] = np.clip(np.minimum(up, down), 0.0, None)
    return fb


_FILTERBANK = _filterbank()
_HANN = np.hanning(MEL_WINDOW)


def mel_spectrogram(samples: np.ndarray, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """64x48 log-Mel energies over 0.5 s of 16 kHz mono audio.

    Inputs shorter than 8000 samples are zero-padded on the left (the
    track-start case); longer inputs are rejected, as is any other rate.
    """
    if sample_rate != SAMPLE_RATE:
        raise ValidationError(f"expected {SAMPLE_RATE} Hz audio, got {sample_rate}")
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size > MEL_SAMPLES:
        raise ValidationError(f"expected <= {MEL_SAMPLES} samples, got {x.size}")
    if x.size < MEL_SAMPLES:
        x = np.concatenate([np.zeros(MEL_SAMPLES - x.size), x])
    starts = np.arange(MEL_FRAMES) * MEL_HOP
    frames = np.stack([x[s : s + MEL_WINDOW] for s in starts]) * _HANN
    mag = np.abs(np.fft.rfft(frames, axis=1))  # (48, 201)
    return np.log(_FILTERBANK @ mag.T + MEL_FLOOR)  # (64, 48)


def mel_sequence(
    waveform: np.ndarray,
    frame_times: np.ndarray,
    t0: float,
    sample_rate: int = SAMPLE_RATE,
) -> np.ndarray:
    """Per-frame Mel features for a track; anchor = frame timestamp.

    waveform starts at track time t0; each frame's feature covers the
    preceding 0.5 s, zero-padded before the start of the waveform.
    """
    out = np.empty((len(frame_times), MEL_BINS, MEL_FRAMES), dtype=np.float32)
    x = np.asarray(waveform, dtype=np.float64).ravel()
    for i, t in enumerate(frame_times):
        end = int(round((t - t0) * sample_rate))
        end = min(max(end, 0), x.size)
        seg = x[max(0, end - MEL_SAMPLES) : end]
        out[i] = mel_spectrogram(seg, sample_rate)
    return out


# ---------------------------------------------------------------------------
# Training windows
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExampleWindow:
    """One 60-frame training/eval unit over a track.

    ``crops`` and ``mels`` reference the full track arrays (no copy);
    ``start_index`` locates the window. Frames past the end of a short
    track repeat the last crop, carry log-floor audio, and are masked out.
    """

    track_id: str
    start_time: float
    start_index: int
    targets: np.ndarray  # (60,) float32 in {0,1}
    mask: np.ndarray  # (60,) bool; False marks padded frames
    crops: np.ndarray  # (N, 128, 128) track crops, uint8 or float
    mels: np.ndarray  # (N, 64, 48) track Mel features

    def __len__(self) -> int:
        return WINDOW_FRAMES

    def frame_indices(self) -> np.ndarray:
        n = len(self.crops)
        return np.minimum(self.start_index + np.arange(WINDOW_FRAMES), n - 1)

    def face_stacks(self, m: int, dtype=np.float32) -> np.ndarray:
        """(60, 128, 128, m) causal stacks, oldest channel first."""
        n = len(self.crops)
        idx = self.frame_indices()[:, None] + np.arange(-m + 1, 1)[None, :]
        idx = np.clip(idx, 0, n - 1)
        stacks = np.moveaxis(self.crops[idx], 1, -1).astype(dtype)
        if self.crops.dtype == np.uint8:
            stacks /= 255.0
        return stacks

    def mel_features(self, dtype=np.float32) -> np.ndarray:
        """(60, 64, 48); padded frames get the log-floor matrix."""
        out = self.mels[self.frame_indices()].astype(dtype)
        out[~self.mask] = LOG_FLOOR
        return out


def frame_targets(
    track: FaceTrack, timeline: LabelTimeline, audible_only: bool = True
) -> np.ndarray:
    """Per-frame binary targets; optionally count SPEAKING_NOT_AUDIBLE as 1."""
    positive = {SpeakLabel.SPEAKING_AUDIBLE}
    if not audible_only:
        positive.add(SpeakLabel.SPEAKING_NOT_AUDIBLE)
    return np.array(
        [timeline.label_at(f.timestamp) in positive for f in track.frames],
        dtype=np.float32,
    )


def window_examples(
    track: FaceTrack,
    timeline: LabelTimeline,
    crops: np.ndarray,
    mels: np.ndarray,
    audible_only: bool = True,
) -> list[ExampleWindow]:
    """Slice a track into 3 s windows with 1 s overlap (2 s stride).

    Tracks shorter than one window yield a single padded, partially masked
    window; trailing spans shorter than the stride are not re-windowed.
    """
    n = len(track.frames)
    if n != len(crops) or n != len(mels):
        raise ValidationError("crops/mels length must match track frames")
    if track.duration < 1.0 - 1e-9:
        raise ValidationError(f"track {track.track_id} shorter than 1 s")
    targets = frame_targets(track, timeline, audible_only)
    stride = WINDOW_FRAMES - WINDOW_OVERLAP_FRAMES  # 2 s
    starts = list(range(0, n - WINDOW_FRAMES + 1, stride)) if n >= WINDOW_FRAMES else [0]
    out = []
    for s in starts:
        valid = min(WINDOW_FRAMES, n - s)
        mask = np.arange(WINDOW_FRAMES) < valid
        tgt = np.zeros(WINDOW_FRAMES, dtype=np.float32)
        tgt[:valid] = targets[s : s + valid]
        out.append(
            ExampleWindow(
                track_id=track.track_id,
                start_time=track.frames[s].timestamp,
                start_index=s,
                targets=tgt,
                mask=mask,
                crops=crops,
                mels=mels,
            )
        )
    return out


def featurize_track(
    track: FaceTrack,
    timeline: LabelTimeline,
    frames: np.ndarray,
    waveform: np.ndarray,
    audible_only: bool = True,
    store_uint8: bool = True,
) -> list[ExampleWindow]:
    """Full featurization: crop every frame, compute Mels, window the track.

    ``frames`` holds one image per track frame; ``waveform`` starts at the
    first frame's timestamp minus half a frame period.
    """
    if len(frames) != len(track.frames):
        raise ValidationError("one image per track frame required")
    crops = np.empty((len(frames), CROP_SIZE, CROP_SIZE), dtype=np.float32)
    for i, tf in enumerate(track.frames):
        crops[i] = crop_face(frames[i], tf.box)
    if store_uint8:
        crops = np.round(crops * 255.0).astype(np.uint8)
    t0 = track.start - 0.5 / track.frame_rate
    times = np.array([f.timestamp for f in track.frames])
    mels = mel_sequence(waveform, times, t0)
    return window_examples(track, timeline, crops, mels, audible_only)
