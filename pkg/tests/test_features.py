import numpy as np
import pytest

from asdkit.errors import ValidationError
from asdkit.features import (
    CROP_SIZE,
    LOG_FLOOR,
    MEL_FRAMES,
    crop_face,
    make_face_stack,
    mel_filter_centers,
    mel_sequence,
    mel_spectrogram,
    window_examples,
)
from asdkit.labels import (
    BoundingBox,
    FaceTrack,
    SpeakLabel,
    TrackFrame,
    LabeledFrame,
    timeline_from_frames,
)

FULL = BoundingBox(0.0, 0.0, 1.0, 1.0)


def test_crop_constant_frame():
    frame = np.full((77, 93), 0.42)
    out = crop_face(frame, BoundingBox(0.1, 0.2, 0.8, 0.9))
    assert out.shape == (128, 128)
    np.testing.assert_allclose(out, 0.42, atol=1e-12)


def test_crop_pure_red_luma():
    frame = np.zeros((32, 32, 3))
    frame[..., 0] = 1.0
    out = crop_face(frame, FULL)
    np.testing.assert_allclose(out, 0.299, atol=1e-12)


def test_crop_uint8_scaling():
    frame = np.full((32, 32), 255, dtype=np.uint8)
    np.testing.assert_allclose(crop_face(frame, FULL), 1.0, atol=1e-12)


def test_crop_checkerboard_mean_vs_area_average():
    # 1-px checkerboard, 2x downscale: the area-average oracle gives a
    # constant 0.5; bilinear must agree within 1%.
    src = np.indices((256, 256)).sum(axis=0) % 2
    out = crop_face(src.astype(float), FULL)
    area_avg = src.reshape(128, 2, 128, 2).mean(axis=(1, 3))
    assert abs(out.mean() - area_avg.mean()) < 0.01


def test_crop_degenerate_box_rejected():
    frame = np.zeros((100, 100))
    with pytest.raises(ValidationError):
        crop_face(frame, BoundingBox(0.5, 0.1, 0.5001, 0.9))


def test_face_stack_edge_padding():
    crops = np.stack([np.full((128, 128), i / 10) for i in range(6)])
    stack = make_face_stack(crops, 0, 3)
    assert stack.shape == (128, 128, 3)
    np.testing.assert_allclose(stack, 0.0)


def test_face_stack_indexing():
    crops = np.stack([np.full((128, 128), i / 10) for i in range(6)])
    stack = make_face_stack(crops, 5, 3)
    np.testing.assert_allclose(stack[0, 0], [0.3, 0.4, 0.5], atol=1e-7)
    single = make_face_stack(crops, 2, 1)
    np.testing.assert_allclose(single[0, 0], [0.2], atol=1e-7)


def test_face_stack_bad_depth():
    crops = np.zeros((4, 128, 128))
    with pytest.raises(ValidationError):
        make_face_stack(crops, 0, 0)


def test_mel_zero_input_is_log_floor():
    out = mel_spectrogram(np.zeros(8000))
    assert out.shape == (64, 48)
    np.testing.assert_allclose(out, LOG_FLOOR, atol=1e-12)


def test_mel_shape_and_rate_check():
    rng = np.random.default_rng(0)
    assert mel_spectrogram(rng.normal(size=8000)).shape == (64, 48)
    with pytest.raises(ValidationError):
        mel_spectrogram(np.zeros(8000), sample_rate=44100)


def test_mel_short_input_left_padded():
    rng = np.random.default_rng(1)
    x = rng.normal(size=3000)
    out = mel_spectrogram(x)
    padded = mel_spectrogram(np.concatenate([np.zeros(5000), x]))
    np.testing.assert_allclose(out, padded)


def test_mel_tone_concentrates_at_nearest_center():
    t = np.arange(8000) / 16000
    tone = np.sin(2 * np.pi * 1000.0 * t)
    out = mel_spectrogram(tone)
    centers = mel_filter_centers()
    expected_bin = int(np.argmin(np.abs(centers - 1000.0)))
    for frame in range(MEL_FRAMES):
        assert int(np.argmax(out[:, frame])) == expected_bin


def test_mel_monotone_under_scaling():
    rng = np.random.default_rng(2)
    x = rng.normal(size=8000)
    assert np.all(mel_spectrogram(3.0 * x) >= mel_spectrogram(x) - 1e-12)


def make_track(n, fps=20.0):
    frames = tuple(TrackFrame(i / fps, BoundingBox(0.2, 0.2, 0.8, 0.8)) for i in range(n))
    return FaceTrack("t", "v", frames, fps)


def make_timeline(n, label=SpeakLabel.SPEAKING_AUDIBLE, fps=20.0):
    frames = [
        LabeledFrame("v", i / fps, BoundingBox(0.2, 0.2, 0.8, 0.8), label, "t")
        for i in range(n)
    ]
    return timeline_from_frames(frames, fps)


def windows_for(n):
    crops = np.zeros((n, CROP_SIZE, CROP_SIZE), dtype=np.uint8)
    mels = np.zeros((n, 64, 48), dtype=np.float32)
    return window_examples(make_track(n), make_timeline(n), crops, mels)


def test_window_stride_arithmetic():
    ws = windows_for(100)
    assert [w.start_index for w in ws] == [0, 40]
    assert all(w.mask.all() for w in ws)


def test_window_exact_fit():
    ws = windows_for(60)
    assert len(ws) == 1 and ws[0].mask.all()


def test_window_short_track_padded_and_masked():
    (w,) = windows_for(30)
    assert w.mask.sum() == 30
    assert not w.mask[30:].any()
    # Padded frames repeat the final crop index.
    assert w.frame_indices()[-1] == 29


def test_window_too_short_rejected():
    with pytest.raises(ValidationError):
        windows_for(10)


def test_window_anchor_alignment_and_counts():
    for w in windows_for(100):
        stacks = w.face_stacks(2)
        mels = w.mel_features()
        assert stacks.shape == (60, CROP_SIZE, CROP_SIZE, 2)
        assert mels.shape == (60, 64, 48)


def test_window_targets_from_timeline():
    n = 80
    labels = [SpeakLabel.SPEAKING_AUDIBLE] * 40 + [SpeakLabel.NOT_SPEAKING] * 40
    frames = [
        LabeledFrame("v", i / 20, BoundingBox(0.2, 0.2, 0.8, 0.8), lab, "t")
        for i, lab in enumerate(labels)
    ]
    tline = timeline_from_frames(frames)
    crops = np.zeros((n, CROP_SIZE, CROP_SIZE), dtype=np.uint8)
    mels = np.zeros((n, 64, 48), dtype=np.float32)
    (w,) = window_examples(make_track(n), tline, crops, mels)
    assert w.targets[:40].sum() == 40
    assert w.targets[40:].sum() == 0


def test_not_audible_flag():
    n = 60
    frames = [
        LabeledFrame("v", i / 20, BoundingBox(0.2, 0.2, 0.8, 0.8),
                     SpeakLabel.SPEAKING_NOT_AUDIBLE, "t")
        for i in range(n)
    ]
    tline = timeline_from_frames(frames)
    crops = np.zeros((n, CROP_SIZE, CROP_SIZE), dtype=np.uint8)
    mels = np.zeros((n, 64, 48), dtype=np.float32)
    (w_strict,) = window_examples(make_track(n), tline, crops, mels, audible_only=True)
    (w_loose,) = window_examples(make_track(n), tline, crops, mels, audible_only=False)
    assert w_strict.targets.sum() == 0
    assert w_loose.targets.sum() == 60


def test_mel_sequence_track_start_padding():
    rng = np.random.default_rng(5)
    times = np.arange(10) / 20.0
    wave = rng.normal(size=int(0.5 * 16000))
    mels = mel_sequence(wave, times, t0=-0.025)
    assert mels.shape == (10, 64, 48)
    # First frame sees only 0.075 s of audio; must equal explicit left-pad.
    end = int(round((times[0] + 0.025) * 16000))
    expected = mel_spectrogram(wave[:end])
    np.testing.assert_allclose(mels[0], expected, rtol=1e-5, atol=1e-6)
