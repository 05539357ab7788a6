import json

import numpy as np
import pytest
from click.testing import CliRunner

from asdkit.analytics import fleiss_kappa
from asdkit.cli import main
from asdkit.labels import SpeakLabel, parse_label_csv
from asdkit.metrics import parse_prediction_csv
from asdkit.training import TrainConfig


@pytest.fixture()
def runner():
    return CliRunner()


@pytest.fixture()
def corpus(tmp_path, runner):
    out = tmp_path / "corpus"
    res = runner.invoke(
        main, ["synth", "--n", "1", "--seed", "3", "--out", str(out), "--duration", "1.0"]
    )
    assert res.exit_code == 0, res.output
    return out


def test_usage_error_exit_code_2(runner):
    res = runner.invoke(main, ["validate"])  # missing --labels
    assert res.exit_code == 2


def test_validate_ok_and_failure(runner, corpus, tmp_path):
    res = runner.invoke(main, ["validate", "--labels", str(corpus / "labels.csv")])
    assert res.exit_code == 0
    assert "ok:" in res.output and "4 tracks" in res.output

    bad = tmp_path / "bad.csv"
    bad.write_text("vid,notanumber,0.1,0.1,0.9,0.9,NOT_SPEAKING,vid:0\n")
    res = runner.invoke(main, ["validate", "--labels", str(bad)])
    assert res.exit_code == 1
    assert "error:" in res.stderr


def test_synth_deterministic(runner, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        res = runner.invoke(
            main, ["synth", "--n", "1", "--seed", "7", "--out", str(out), "--duration", "1.0"]
        )
        assert res.exit_code == 0
    assert (a / "labels.csv").read_bytes() == (b / "labels.csv").read_bytes()


def test_stats_stdout_and_json(runner, corpus, tmp_path):
    labels = str(corpus / "labels.csv")
    res = runner.invoke(main, ["stats", "--labels", labels])
    assert res.exit_code == 0 and "NOT_SPEAKING" in res.output
    out = tmp_path / "stats.json"
    res = runner.invoke(main, ["stats", "--labels", labels, "--out", str(out)])
    assert res.exit_code == 0
    json.loads(out.read_text())


def test_tracks_roundtrip(runner, corpus, tmp_path):
    out = tmp_path / "tracks.csv"
    res = runner.invoke(
        main, ["tracks", "--labels", str(corpus / "labels.csv"), "--out", str(out)]
    )
    assert res.exit_code == 0
    parsed = parse_label_csv(out.read_text())
    assert len(parsed) == 4


def test_kappa_identical_raters_and_errors(runner, corpus, tmp_path):
    labels = str(corpus / "labels.csv")
    res = runner.invoke(main, ["kappa", "--labels", labels, "--labels", labels])
    assert res.exit_code == 0
    assert "fleiss_kappa: 1.000000" in res.output

    res = runner.invoke(main, ["kappa", "--labels", labels])
    assert res.exit_code == 1 and "two" in res.stderr

    other = tmp_path / "other.csv"
    other.write_text("vid,0.025000,0.100000,0.100000,0.900000,0.900000,NOT_SPEAKING,vid:0\n")
    res = runner.invoke(main, ["kappa", "--labels", labels, "--labels", str(other)])
    assert res.exit_code == 1 and "different frames" in res.stderr


def test_kappa_matches_direct_formula(runner, corpus, tmp_path):
    """Flip one track's labels in a second rater file; compare with the oracle."""
    labels_path = corpus / "labels.csv"
    text = labels_path.read_text()
    flipped = text.replace("SPEAKING_AUDIBLE", "XTMP").replace(
        "NOT_SPEAKING", "SPEAKING_AUDIBLE"
    ).replace("XTMP", "NOT_SPEAKING")
    other = tmp_path / "rater2.csv"
    other.write_text(flipped)

    res = runner.invoke(
        main, ["kappa", "--labels", str(labels_path), "--labels", str(other)]
    )
    assert res.exit_code == 0
    got = float(res.output.split(":")[1])

    a = [f for v in parse_label_csv(text).values() for f in v]
    b = [f for v in parse_label_csv(flipped).values() for f in v]
    key = lambda f: (f.video_id, f.track_id, round(f.timestamp, 6))
    bmap = {key(f): f.label for f in b}
    cats = list(SpeakLabel)
    matrix = [
        [int(f.label is c) + int(bmap[key(f)] is c) for c in cats]
        for f in sorted(a, key=key)
    ]
    assert got == pytest.approx(fleiss_kappa(matrix), abs=5e-7)


def test_cooccur_report(runner, corpus, tmp_path):
    labels = parse_label_csv((corpus / "labels.csv").read_text())
    track_id = sorted(labels)[0]
    ts = labels[track_id][3].timestamp
    actions = tmp_path / "actions.csv"
    actions.write_text(f"{track_id},{ts},wave\n")
    res = runner.invoke(
        main,
        ["cooccur", "--labels", str(corpus / "labels.csv"), "--actions", str(actions)],
    )
    assert res.exit_code == 0 and "wave" in res.output

    actions.write_text("too,few\n")
    res = runner.invoke(
        main,
        ["cooccur", "--labels", str(corpus / "labels.csv"), "--actions", str(actions)],
    )
    assert res.exit_code == 1


def test_featurize_writes_archives(runner, corpus, tmp_path):
    out = tmp_path / "feats"
    res = runner.invoke(
        main,
        [
            "featurize",
            "--labels",
            str(corpus / "labels.csv"),
            "--media-dir",
            str(corpus),
            "--out",
            str(out),
        ],
    )
    assert res.exit_code == 0, res.output
    archives = sorted(out.glob("*.npz"))
    assert len(archives) == 4
    data = np.load(archives[0])
    assert {"crops", "mels", "targets", "masks", "start_indices"} <= set(data.files)
    assert data["mels"].shape[1:] == (64, 48)


def test_train_score_eval_map_smoke(runner, corpus, tmp_path):
    cfg = TrainConfig()
    payload = json.loads(cfg.to_json())
    payload["epochs"] = 1
    payload["batch_size"] = 4
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(payload))

    labels = str(corpus / "labels.csv")
    ckpt = tmp_path / "model.ckpt"
    res = runner.invoke(
        main,
        [
            "train",
            "--labels",
            labels,
            "--media-dir",
            str(corpus),
            "--out",
            str(ckpt),
            "--config",
            str(cfg_path),
            "--variant",
            "A-STATIC-f1",
        ],
    )
    assert res.exit_code == 0, res.output
    assert ckpt.exists() and (tmp_path / "model.ckpt.history.json").exists()
    assert "A-STATIC-f1" in res.output

    preds = tmp_path / "preds.csv"
    res = runner.invoke(
        main,
        [
            "score",
            "--checkpoint",
            str(ckpt),
            "--labels",
            labels,
            "--media-dir",
            str(corpus),
            "--out",
            str(preds),
        ],
    )
    assert res.exit_code == 0, res.output
    scored = parse_prediction_csv(preds.read_text())
    assert len(scored) == 80  # 4 tracks x 20 frames

    res = runner.invoke(main, ["eval", "--labels", labels, "--predictions", str(preds)])
    assert res.exit_code == 0, res.output
    assert "auroc" in res.output.lower()

    out_json = tmp_path / "eval.json"
    res = runner.invoke(
        main,
        ["eval", "--labels", labels, "--predictions", str(preds), "--out", str(out_json)],
    )
    assert res.exit_code == 0
    report = json.loads(out_json.read_text())
    assert "auroc" in report

    res = runner.invoke(main, ["map", "--labels", labels, "--predictions", str(preds)])
    assert res.exit_code == 0, res.output
    value = float(res.output.split(":")[1])
    assert 0.0 <= value <= 1.0


def test_train_missing_media_fails_cleanly(runner, corpus, tmp_path):
    res = runner.invoke(
        main,
        [
            "train",
            "--labels",
            str(corpus / "labels.csv"),
            "--media-dir",
            str(tmp_path / "nowhere"),
            "--out",
            str(tmp_path / "m.ckpt"),
        ],
    )
    assert res.exit_code == 1
    assert "error:" in res.stderr
