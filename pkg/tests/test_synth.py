import hashlib

import numpy as np
import pytest

from asdkit.errors import ValidationError
from asdkit.features import SAMPLE_RATE, featurize_track
from asdkit.labels import (
    SpeakLabel,
    parse_label_csv,
    serialize_labels,
    timeline_from_frames,
)
from asdkit.synth import (
    SPEECH_GATE,
    ClipKind,
    ClipSpec,
    CorpusClip,
    corpus_labels,
    generate_clip,
    generate_corpus,
    load_clip_media,
    write_corpus,
)
from asdkit.tracks import raw_tracks_from_frames, run_pipeline


def frame_rms(waveform, n_frames):
    per = SAMPLE_RATE // 20
    return np.array(
        [np.sqrt(np.mean(waveform[i * per : (i + 1) * per] ** 2)) for i in range(n_frames)]
    )


def test_clip_determinism():
    spec = ClipSpec(kind=ClipKind.SPEAKING, duration=2.0, seed=5, noise_level=0.3)
    a = generate_clip(spec)
    b = generate_clip(spec)
    np.testing.assert_array_equal(a.frames, b.frames)
    np.testing.assert_array_equal(a.waveform, b.waveform)
    assert a.labels == b.labels


def test_speaking_aperture_tracks_audio_rms_on_audible_syllables():
    clip = generate_clip(ClipSpec(kind=ClipKind.SPEAKING, duration=3.0, seed=1))
    rms = frame_rms(clip.waveform, len(clip.frames))
    audible = np.array([l is SpeakLabel.SPEAKING_AUDIBLE for l in clip.labels])
    muted = np.array([l is SpeakLabel.SPEAKING_NOT_AUDIBLE for l in clip.labels])
    assert audible.any() and muted.any()
    # Audible syllables: loudness follows the mouth; muted ones are silent
    # in the soundtrack even though the mouth articulates them.
    corr = np.corrcoef(clip.apertures[audible], rms[audible])[0, 1]
    assert corr > 0.6
    assert rms[audible].mean() > 5 * rms[muted].mean()
    np.testing.assert_array_equal(clip.apertures[muted] > 0, True)


def test_silent_motion_quiet_at_every_frame():
    speaking = generate_clip(ClipSpec(kind=ClipKind.SPEAKING, duration=3.0, seed=2))
    silent = generate_clip(ClipSpec(kind=ClipKind.SILENT_MOTION, duration=3.0, seed=2))
    gate = SPEECH_GATE * frame_rms(speaking.waveform, len(speaking.frames)).max()
    assert (frame_rms(silent.waveform, len(silent.frames)) < gate).all()
    assert all(l is SpeakLabel.NOT_SPEAKING for l in silent.labels)


def test_speaking_labels_follow_gate():
    clip = generate_clip(ClipSpec(kind=ClipKind.SPEAKING, duration=3.0, seed=3))
    gate = SPEECH_GATE * clip.apertures.max()
    speaking = {SpeakLabel.SPEAKING_AUDIBLE, SpeakLabel.SPEAKING_NOT_AUDIBLE}
    for e, label in zip(clip.apertures, clip.labels):
        if e > gate:
            assert label in speaking
        else:
            assert label is SpeakLabel.NOT_SPEAKING
    assert SpeakLabel.SPEAKING_AUDIBLE in clip.labels


def test_nonspeaking_kinds_all_negative():
    for kind in (ClipKind.OFFSCREEN_SPEECH, ClipKind.STATIC_WITH_MUSIC):
        clip = generate_clip(ClipSpec(kind=kind, duration=1.5, seed=4))
        assert all(l is SpeakLabel.NOT_SPEAKING for l in clip.labels)
        assert (clip.apertures == 0).all()


def test_silent_motion_shares_aperture_trajectory():
    speaking = generate_clip(ClipSpec(kind=ClipKind.SPEAKING, duration=3.0, seed=6))
    silent = generate_clip(ClipSpec(kind=ClipKind.SILENT_MOTION, duration=3.0, seed=6))
    np.testing.assert_array_equal(speaking.apertures, silent.apertures)


def test_mouth_pixels_react_to_aperture():
    open_img = generate_clip(ClipSpec(kind=ClipKind.SPEAKING, duration=1.0, seed=7))
    dark_counts = [(f < 25).sum() for f in open_img.frames]
    # More open mouth -> more dark mouth pixels.
    corr = np.corrcoef(open_img.apertures, dark_counts)[0, 1]
    assert corr > 0.9


def test_clip_spec_validation():
    with pytest.raises(ValidationError):
        ClipSpec(kind=ClipKind.SPEAKING, duration=0.5)
    with pytest.raises(ValidationError):
        ClipSpec(kind=ClipKind.SPEAKING, duration=11.0)
    with pytest.raises(ValidationError):
        ClipSpec(kind=ClipKind.SPEAKING, noise_level=2.0)
    with pytest.raises(ValidationError):
        ClipSpec(kind=ClipKind.SPEAKING, face_size="huge")


def test_corpus_counts_and_balance():
    clips = generate_corpus(n_per_kind=1, seed=0)
    assert len(clips) == 4
    assert {c.spec.kind for c in clips} == set(ClipKind)
    assert len({c.video_id for c in clips}) == 4


def test_corpus_csv_round_trips():
    clips = generate_corpus(n_per_kind=2, seed=1, duration=1.0)
    frames = corpus_labels(clips)
    text = serialize_labels(frames)
    parsed = parse_label_csv(text)
    assert sum(len(v) for v in parsed.values()) == len(frames)
    assert serialize_labels([f for v in parsed.values() for f in v]) == text


def test_corpus_label_totals_match_construction():
    clips = generate_corpus(n_per_kind=3, seed=2, duration=1.0)
    built = sum(
        sum(1 for l in c.clip.labels if l is SpeakLabel.SPEAKING_AUDIBLE) for c in clips
    )
    emitted = sum(
        1 for f in corpus_labels(clips) if f.label is SpeakLabel.SPEAKING_AUDIBLE
    )
    assert built == emitted > 0


def test_disjoint_seeds_disjoint_hashes():
    def digest(clips):
        h = hashlib.sha256()
        for c in clips:
            h.update(c.clip.frames.tobytes())
            h.update(c.clip.waveform.tobytes())
        return h.hexdigest()

    a = generate_corpus(n_per_kind=1, seed=10, duration=1.0)
    b = generate_corpus(n_per_kind=1, seed=11, duration=1.0)
    assert digest(a) != digest(b)


def test_corpus_write_and_load(tmp_path):
    clips = generate_corpus(n_per_kind=1, seed=3, duration=1.0, out_dir=tmp_path)
    assert (tmp_path / "labels.csv").exists()
    for c in clips:
        frames, audio = load_clip_media(tmp_path, c.video_id)
        np.testing.assert_array_equal(frames, c.clip.frames)
        np.testing.assert_array_equal(audio, c.clip.waveform)
    with pytest.raises(ValidationError):
        load_clip_media(tmp_path, "nope")


def test_corpus_write_deterministic(tmp_path):
    d1, d2 = tmp_path / "a", tmp_path / "b"
    generate_corpus(n_per_kind=2, seed=7, duration=1.0, out_dir=d1)
    generate_corpus(n_per_kind=2, seed=7, duration=1.0, out_dir=d2)
    assert (d1 / "labels.csv").read_bytes() == (d2 / "labels.csv").read_bytes()
    for sub in sorted(p.name for p in d1.iterdir() if p.is_dir()):
        for name in ("frames.npy", "audio.npy", "manifest.json"):
            assert (d1 / sub / name).read_bytes() == (d2 / sub / name).read_bytes()


def test_clips_flow_through_pipeline_and_featurization():
    clip = generate_clip(ClipSpec(kind=ClipKind.SPEAKING, duration=3.0, seed=8))
    labeled = clip.labeled_frames("vid")
    tracks = run_pipeline(raw_tracks_from_frames({"vid:0": labeled}))
    assert len(tracks) == 1
    track = tracks[0]
    assert len(track.frames) == len(clip.frames)
    timeline = timeline_from_frames(labeled)
    windows = featurize_track(track, timeline, clip.frames, clip.waveform)
    assert len(windows) == 1
    assert windows[0].mask.all()
    assert windows[0].targets.sum() > 0
