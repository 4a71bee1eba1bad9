import json

import numpy as np
import pytest

from distress_screen import fusion_model as fm
from distress_screen.cli import run_cli
from distress_screen.persistence import FeatureTable, load_model, save_model, write_feature_csv
from distress_screen.synthetic import make_synthetic_records
from distress_screen.wav import write_wav

from conftest import sine


@pytest.fixture(scope="module")
def feature_files(tmp_path_factory):
    root = tmp_path_factory.mktemp("features")
    recs = make_synthetic_records(120, seed=7)
    ids = [r.id for r in recs]
    labels = [r.label for r in recs]
    write_feature_csv(FeatureTable("audio", ids, np.stack([r.audio for r in recs]), labels), root / "audio.csv")
    write_feature_csv(FeatureTable("text", ids, np.stack([r.text for r in recs])), root / "text.csv")
    return root


def _ptsd_report_predictions(path):
    rows = [(0, 0.1)] * 330 + [(0, 0.9)] * 14 + [(1, 0.1)] * 24 + [(1, 0.9)] * 215
    lines = ["id,label,score"] + [f"p{i:03d},{y},{s}" for i, (y, s) in enumerate(rows)]
    path.write_text("\n".join(lines) + "\n")


def test_evaluate_predictions_file(tmp_path, capsys):
    _ptsd_report_predictions(tmp_path / "pred.csv")
    code = run_cli(["evaluate", "--predictions", str(tmp_path / "pred.csv"), "--task", "ptsd",
                    "--json-out", str(tmp_path / "m.json")])
    out = capsys.readouterr().out
    assert code == 0
    assert "accuracy: 0.93" in out
    report = json.loads((tmp_path / "m.json").read_text())
    assert report["task"] == "ptsd" and report["total"] == 583


def test_train_is_reproducible(feature_files, tmp_path, capsys):
    outputs = []
    for run in ("a", "b"):
        d = tmp_path / run
        d.mkdir()
        code = run_cli([
            "train", "--audio-features", str(feature_files / "audio.csv"),
            "--text-features", str(feature_files / "text.csv"), "--task", "ptsd",
            "--model-out", str(d / "model.dsm"), "--history-out", str(d / "hist.csv"),
            "--predictions-out", str(d / "pred.csv"), "--seed", "7", "--epochs", "3",
        ])
        assert code == 0
        outputs.append(capsys.readouterr().out)
    for name in ("model.dsm", "hist.csv", "pred.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    strip = lambda o: [l for l in o.splitlines() if not l.startswith("saved ")]  # noqa: E731
    assert strip(outputs[0]) == strip(outputs[1])
    assert "Test Accuracy:" in outputs[0]
    assert load_model(tmp_path / "a" / "model.dsm").task_tag == "ptsd"

    # the saved held-out predictions evaluate to the printed accuracy
    run_cli(["evaluate", "--predictions", str(tmp_path / "a" / "pred.csv")])
    acc_line = [l for l in capsys.readouterr().out.splitlines() if l.startswith("accuracy:")][0]
    assert acc_line.split()[-1] in outputs[0]


@pytest.fixture(scope="module")
def small_model(tmp_path_factory):
    path = tmp_path_factory.mktemp("model") / "dep.dsm"
    save_model(fm.build_model(2, task_tag="depression"), path)
    return path


def test_predict_from_feature_rows(feature_files, small_model, capsys):
    code = run_cli(["predict", "--model", str(small_model), "--audio-features", str(feature_files / "audio.csv"),
                    "--text-features", str(feature_files / "text.csv"), "--id", "s0003"])
    body = json.loads(capsys.readouterr().out)
    assert code == 0
    assert 0 <= body["depression_score"] <= 1
    assert body["depression_decision"] in ("early_intervention", "regular_monitoring")


def test_predict_wav_and_text(tmp_path, small_model, capsys):
    write_wav(tmp_path / "x.wav", sine(220, 1.0).samples, 16000)
    code = run_cli(["predict", "--model", str(small_model), "--wav", str(tmp_path / "x.wav"),
                    "--text", "I have been sleeping badly", "--threshold", "0.0"])
    body = json.loads(capsys.readouterr().out)
    assert code == 0 and body["embedding_source"] == "stub"
    assert body["depression_decision"] == "early_intervention"


def test_predict_narrow_text_row_is_data_error(tmp_path, feature_files, small_model, capsys):
    bad = tmp_path / "text767.csv"
    bad.write_text("id," + ",".join(f"e{i}" for i in range(767)) + "\nx," + ",".join(["0.1"] * 767) + "\n")
    code = run_cli(["predict", "--model", str(small_model), "--audio-features", str(feature_files / "audio.csv"),
                    "--id", "s0000", "--text-features", str(bad)])
    assert code == 2
    err = capsys.readouterr().err
    assert "data error" in err and "767 feature columns" in err


def test_predict_wrong_sample_rate(tmp_path, small_model):
    write_wav(tmp_path / "x.wav", np.zeros(22050), 22050)
    assert run_cli(["predict", "--model", str(small_model), "--wav", str(tmp_path / "x.wav"), "--text", "hi"]) == 2


def test_usage_errors(capsys):
    assert run_cli([]) == 1
    assert run_cli(["train"]) == 1
    assert run_cli(["bogus"]) == 1
    assert run_cli(["evaluate"]) == 1


def test_missing_file_is_data_error(tmp_path):
    assert run_cli(["evaluate", "--predictions", str(tmp_path / "none.csv")]) == 2


def test_extract_audio(tmp_path):
    wavs = tmp_path / "wavs"
    wavs.mkdir()
    for i, f in enumerate((150, 300, 600)):
        write_wav(wavs / f"p{i}.wav", sine(f, 1.0).samples, 16000)
    (tmp_path / "labels.csv").write_text("id,label\np0,0\np1,1\np2,0\n")
    out = tmp_path / "audio.csv"
    assert run_cli(["extract-audio", "--audio-dir", str(wavs), "--out", str(out),
                    "--labels", str(tmp_path / "labels.csv"), "--workers", "2"]) == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("id,label,f0,") and len(lines[0].split(",")) == 195
    assert [l.split(",")[:2] for l in lines[1:]] == [["p0", "0"], ["p1", "1"], ["p2", "0"]]


def test_extract_audio_empty_dir(tmp_path):
    assert run_cli(["extract-audio", "--audio-dir", str(tmp_path), "--out", str(tmp_path / "o.csv")]) == 2


def test_extract_text(tmp_path):
    tdir = tmp_path / "transcripts"
    tdir.mkdir()
    (tdir / "300_TRANSCRIPT.csv").write_text(
        "start_time\tstop_time\tspeaker\tvalue\n"
        "1.0\t2.0\tEllie\thow are you\n"
        "2.5\t4.0\tParticipant\tI have been feeling tired\n"
    )
    out = tmp_path / "text.csv"
    assert run_cli(["extract-text", "--transcripts", str(tdir), "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 2 and lines[1].startswith("300,")
    assert len(lines[1].split(",")) == 769
