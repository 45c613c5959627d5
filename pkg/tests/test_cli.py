import json

import numpy as np
import pytest

from volclass import model_store as ms
from volclass.cli import main
from volclass.errors import ShapeMismatch
from volclass.histogram import read_pgm


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    assert main(["synth", str(out), "--counts", "blob=2,shell=2,checker=1", "--size", "24"]) == 0
    return out


@pytest.fixture(scope="module")
def model(corpus, tmp_path_factory):
    path = tmp_path_factory.mktemp("model") / "m.vcls"
    for name, label in (("blob_000", "blob"), ("shell_000", "shell")):
        assert main(["train", "-m", str(path), str(corpus / f"{name}.raw"), "--label", label]) == 0
    return path


def run_json(capsys, argv):
    capsys.readouterr()
    assert main(argv + ["--json"]) == 0
    return json.loads(capsys.readouterr().out)


def test_synth_writes_manifest(corpus):
    lines = (corpus / "labels.csv").read_text().splitlines()
    assert lines[0] == "name,label"
    assert "checker_000,<rest>" in lines
    assert (corpus / "blob_001.meta").exists()


def test_histogram_default_and_reduced(corpus, tmp_path, capsys):
    vol = str(corpus / "blob_000.raw")
    assert main(["histogram", vol, "--out", str(tmp_path / "full.pgm")]) == 0
    assert read_pgm(tmp_path / "full.pgm").shape == (256, 256)
    info = run_json(capsys, ["histogram", vol, "--reduce", "3", "--out", str(tmp_path / "r.pgm"),
                             "--csv", str(tmp_path / "r.csv")])
    assert info["size"] == 32
    assert read_pgm(tmp_path / "r.pgm").shape == (32, 32)
    assert (tmp_path / "r.csv").read_text().startswith("row,col,count\n")


def test_histogram_needs_output(corpus):
    assert main(["histogram", str(corpus / "blob_000.raw")]) == 1


def test_missing_sidecar_is_usage_error(tmp_path):
    raw = tmp_path / "v.raw"
    raw.write_bytes(bytes(8 * 8 * 8))
    assert main(["histogram", str(raw), "--out", str(tmp_path / "h.pgm")]) == 1
    assert main(["histogram", str(raw), "--dims", "8,8,8", "--type", "u8", "--out", str(tmp_path / "h.pgm")]) == 0


def test_bad_arguments_exit_1(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["classify"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 1


def test_first_train_creates_model(corpus, tmp_path, capsys):
    path = tmp_path / "new.vcls"
    out = run_json(capsys, ["train", "-m", str(path), str(corpus / "blob_000.raw"), "--label", "blob"])
    assert out["created"] and out["classes"] == ["blob"] and out["converged"]
    assert len(ms.load(path).samples) == 1


def test_relabel_replaces_sample(corpus, tmp_path, capsys):
    path = tmp_path / "m.vcls"
    vol = str(corpus / "blob_000.raw")
    main(["train", "-m", str(path), vol, "--label", "blob"])
    capsys.readouterr()
    assert main(["train", "-m", str(path), vol, "--label", "shell"]) == 0
    text = capsys.readouterr().out
    assert "converged=true" in text
    state = ms.load(path)
    assert state.classes == ["blob", "shell"]
    assert [(s.source_id, s.label) for s in state.samples] == [("blob_000.raw", "shell")]


def test_classes(model, capsys):
    out = run_json(capsys, ["classes", "-m", str(model)])
    assert out["classes"] == ["blob", "shell"]
    assert out["samples"] == {"blob": 1, "shell": 1}
    assert out["reduction_factor"] == 3


def test_classify_text_and_json(model, corpus, capsys):
    capsys.readouterr()
    assert main(["classify", "-m", str(model), str(corpus / "blob_001.raw")]) == 0
    assert "chosen=blob" in capsys.readouterr().out
    res = run_json(capsys, ["classify", "-m", str(model), str(corpus / "shell_001.raw")])
    assert res["chosen"] == "shell" and not res["rejected"]
    assert set(res["scores"]) == {"blob", "shell"}


def test_threshold_rejects_borderline(model, corpus, capsys):
    vol = str(corpus / "checker_000.raw")
    plain = run_json(capsys, ["classify", "-m", str(model), vol])
    assert plain["confidence"] < 0.9
    res = run_json(capsys, ["classify", "-m", str(model), vol, "--threshold", "0.9"])
    assert res["rejected"] and res["chosen"] == "<rest>"


def test_reduced_model_rejects_other_histogram_size(corpus, tmp_path):
    path = tmp_path / "r4.vcls"
    assert main(["train", "-m", str(path), str(corpus / "blob_000.raw"), "--label", "blob", "--reduce", "4"]) == 0
    state = ms.load(path)
    assert state.network.n_inputs == 16 * 16
    with pytest.raises(ShapeMismatch, match="expects 16x16.*got 32x32"):
        state.classify(np.zeros(32 * 32))


def test_corrupt_model_exit_2(corpus, tmp_path):
    bad = tmp_path / "bad.vcls"
    bad.write_bytes(b"nope")
    assert main(["classify", "-m", str(bad), str(corpus / "blob_000.raw")]) == 2


def test_eval_csv_is_reproducible(model, corpus, tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["eval", "-m", str(model), str(corpus), "--csv", str(a)]) == 0
    assert main(["eval", "-m", str(model), str(corpus), "--csv", str(b), "--matrix"]) == 0
    assert a.read_bytes() == b.read_bytes()
    rows = a.read_text().splitlines()
    assert len(rows) == 5 and rows[1].startswith("1,,5,")
    out = run_json(capsys, ["eval", "-m", str(model), str(corpus), "--thresholds", "none,0.99", "--no-rest-class"])
    assert [r["threshold"] for r in out] == [None, 0.99]


def test_eval_empty_corpus(model, tmp_path):
    (tmp_path / "labels.csv").write_text("name,label\n")
    assert main(["eval", "-m", str(model), str(tmp_path)]) == 1
