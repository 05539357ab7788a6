import math

import pytest
from hypothesis import given, strategies as st

from asdkit.errors import ParseError, ValidationError
from asdkit.labels import (
    BoundingBox,
    LabeledFrame,
    SpeakLabel,
    parse_label_csv,
    serialize_labels,
    timeline_from_frames,
)

CANONICAL = "vid1,15.680000,0.210000,0.110000,0.440000,0.720000,SPEAKING_AUDIBLE,vid1_t1\n"


def test_parse_canonical_line():
    by_track = parse_label_csv(CANONICAL)
    assert list(by_track) == ["vid1_t1"]
    (f,) = by_track["vid1_t1"]
    assert f.video_id == "vid1"
    assert f.timestamp == pytest.approx(15.68)
    assert (f.box.x1, f.box.y1, f.box.x2, f.box.y2) == (0.21, 0.11, 0.44, 0.72)
    assert f.label is SpeakLabel.SPEAKING_AUDIBLE
    assert f.track_id == "vid1_t1"


def test_parse_empty_input():
    assert parse_label_csv("") == {}


def test_parse_inverted_box_rejected():
    line = "v,1.000000,0.500000,0.100000,0.400000,0.700000,NOT_SPEAKING,t\n"
    with pytest.raises(ValidationError):
        parse_label_csv(line)


def test_parse_bad_field_count_names_line():
    with pytest.raises(ParseError) as e:
        parse_label_csv(CANONICAL + "a,b,c\n")
    assert e.value.line == 2


def test_parse_non_numeric_coordinate():
    with pytest.raises(ParseError):
        parse_label_csv("v,1.0,0.1,oops,0.4,0.7,NOT_SPEAKING,t\n")


def test_parse_unknown_label_rejected():
    with pytest.raises(ParseError):
        parse_label_csv("v,1.0,0.1,0.1,0.4,0.7,MAYBE_SPEAKING,t\n")


def test_parse_decreasing_timestamps_rejected():
    lines = (
        "v,2.000000,0.1,0.1,0.4,0.7,NOT_SPEAKING,t\n"
        "v,1.000000,0.1,0.1,0.4,0.7,NOT_SPEAKING,t\n"
    )
    with pytest.raises(ValidationError):
        parse_label_csv(lines)


def test_coordinate_clamp_tolerance():
    f = parse_label_csv("v,1.0,0.1,0.1,0.4,1.0000005,NOT_SPEAKING,t\n")["t"][0]
    assert f.box.y2 == 1.0
    with pytest.raises(ValidationError):
        parse_label_csv("v,1.0,0.1,0.1,0.4,1.1,NOT_SPEAKING,t\n")


def test_serialize_round_trip_bytes():
    assert serialize_labels(parse_label_csv(CANONICAL)["vid1_t1"]) == CANONICAL


def test_serialize_fixed_point_formatting():
    f = LabeledFrame("v", 15.68, BoundingBox(0.1, 0.2, 0.3, 0.4), SpeakLabel.NOT_SPEAKING, "t")
    assert serialize_labels([f]).split(",")[1] == "15.680000"


def test_serialize_sorts_interleaved_tracks():
    def line(vid, ts, track):
        return f"{vid},{ts:.6f},0.100000,0.100000,0.400000,0.700000,NOT_SPEAKING,{track}\n"

    # Interleaved input; expectation built with an independent sort.
    records = [("v1", 1.0, "t2"), ("v1", 0.5, "t1"), ("v1", 1.05, "t2"), ("v1", 0.55, "t1")]
    text = "".join(line(*r) for r in sorted(records, key=lambda r: (r[2], r[1])))
    frames = [f for fs in parse_label_csv(text).values() for f in fs]
    expected = "".join(line(v, t, tr) for v, t, tr in sorted(records, key=lambda r: (r[0], r[2], r[1])))
    assert serialize_labels(frames) == expected


@given(
    st.lists(
        st.tuples(
            st.floats(0, 100),
            st.sampled_from(list(SpeakLabel)),
        ),
        min_size=1,
        max_size=20,
    )
)
def test_parse_serialize_identity_property(items):
    frames = []
    for i, (ts, label) in enumerate(sorted(items, key=lambda it: it[0])):
        frames.append(
            LabeledFrame("v", round(ts, 6) + i * 1000.0, BoundingBox(0.1, 0.1, 0.5, 0.5), label, "t")
        )
    text = serialize_labels(frames)
    reparsed = [f for fs in parse_label_csv(text).values() for f in fs]
    assert serialize_labels(reparsed) == text


def _frames(labels, fps=20.0, t0=0.0):
    return [
        LabeledFrame("v", t0 + i / fps, BoundingBox(0.1, 0.1, 0.5, 0.5), lab, "t")
        for i, lab in enumerate(labels)
    ]


def test_timeline_single_label_duration():
    tl = timeline_from_frames(_frames([SpeakLabel.SPEAKING_AUDIBLE] * 40))
    assert len(tl.segments) == 1
    assert tl.segments[0].duration == pytest.approx(2.0)


def test_timeline_midpoint_boundary():
    NS, SA = SpeakLabel.NOT_SPEAKING, SpeakLabel.SPEAKING_AUDIBLE
    tl = timeline_from_frames(_frames([NS, NS, SA, SA]))
    assert len(tl.segments) == 2
    # Frames at t=0,0.05,0.10,0.15; label change between 0.05 and 0.10.
    assert tl.segments[0].end == pytest.approx(0.075)
    assert tl.segments[0].label is NS
    assert tl.segments[1].label is SA


def test_timeline_alternating_labels():
    NS, SA = SpeakLabel.NOT_SPEAKING, SpeakLabel.SPEAKING_AUDIBLE
    tl = timeline_from_frames(_frames([NS, SA, NS, SA]))
    assert len(tl.segments) == 4
    for seg in tl.segments:
        assert seg.duration == pytest.approx(0.05)


def test_timeline_nonuniform_spacing_rejected():
    f = _frames([SpeakLabel.NOT_SPEAKING] * 3)
    f[2] = LabeledFrame("v", 0.2, f[2].box, f[2].label, "t")
    with pytest.raises(ValidationError):
        timeline_from_frames(f)


@given(st.lists(st.sampled_from(list(SpeakLabel)), min_size=1, max_size=100))
def test_timeline_durations_sum_to_track_duration(labels):
    tl = timeline_from_frames(_frames(labels))
    total = sum(s.duration for s in tl.segments)
    assert math.isclose(total, len(labels) / 20.0, abs_tol=1e-9)


def test_label_string_round_trip():
    for lab in SpeakLabel:
        assert SpeakLabel.from_string(lab.value) is lab
