import json
import subprocess
import sys

import pytest

from mccws.corpus import Vocab

CLI = [sys.executable, "-m", "mccws.cli"]


def run_cli(*args, expect=0):
    proc = subprocess.run([*CLI, *args], capture_output=True, text=True)
    assert proc.returncode == expect, f"exit {proc.returncode}\nstdout={proc.stdout}\nstderr={proc.stderr}"
    return proc


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    (d / "ctb.txt").write_text("李娜 进入 半决赛\n", encoding="utf-8")
    (d / "pku.txt").write_text("李 娜 进入 半 决赛\n", encoding="utf-8")
    run_cli("build-vocab", "--corpus", f"ctb={d / 'ctb.txt'}",
            "--corpus", f"pku={d / 'pku.txt'}", "--out", str(d / "vocab.txt"))
    return d


@pytest.fixture(scope="module")
def trained(workdir):
    d = workdir
    run_cli("train",
            "--corpus", f"ctb={d / 'ctb.txt'}", "--corpus", f"pku={d / 'pku.txt'}",
            "--vocab", str(d / "vocab.txt"), "--out", str(d / "model.ckpt"),
            "--epochs", "200", "--batch-size", "2", "--lr", "2e-3",
            "--d-h", "32", "--d-e", "16", "--layers", "1", "--heads", "2",
            "--d-ff", "64", "--max-len", "32", "--seed", "0")
    return d


# -- build-vocab ----------------------------------------------------------------

def test_build_vocab_output(workdir):
    proc = run_cli("build-vocab", "--corpus", f"ctb={workdir / 'ctb.txt'}",
                   "--corpus", f"pku={workdir / 'pku.txt'}",
                   "--out", str(workdir / "vocab2.txt"))
    assert "criteria: 2 (ctb, pku)" in proc.stdout
    vocab = Vocab.load(workdir / "vocab2.txt")
    assert "<ctb>" in vocab.unigrams and "<pku>" in vocab.unigrams
    # rerun on identical input: byte-identical file
    assert (workdir / "vocab2.txt").read_bytes() == (workdir / "vocab.txt").read_bytes()


def test_build_vocab_preprocesses(tmp_path):
    (tmp_path / "c.txt").write_text("ＡＢ12 李\n", encoding="utf-8")
    run_cli("build-vocab", "--corpus", f"x={tmp_path / 'c.txt'}",
            "--out", str(tmp_path / "v.txt"))
    vocab = Vocab.load(tmp_path / "v.txt")
    assert "<eng>" in vocab.unigrams and "<num>" in vocab.unigrams
    assert "Ａ" not in vocab.unigrams and "A" not in vocab.unigrams


def test_build_vocab_bad_pair(tmp_path):
    run_cli("build-vocab", "--corpus", "nonsense", "--out", str(tmp_path / "v.txt"),
            expect=2)


# -- train -------------------------------------------------------------------------

def test_train_epochs_zero_warns(workdir, tmp_path):
    proc = run_cli("train", "--corpus", f"ctb={workdir / 'ctb.txt'}",
                   "--vocab", str(workdir / "vocab.txt"),
                   "--out", str(tmp_path / "init.ckpt"), "--epochs", "0")
    assert "epochs 0" in proc.stderr or "initialized" in proc.stderr
    assert (tmp_path / "init.ckpt").exists()


def test_train_unknown_criterion_exits_config(workdir, tmp_path):
    proc = run_cli("train", "--corpus", f"msr={workdir / 'ctb.txt'}",
                   "--vocab", str(workdir / "vocab.txt"),
                   "--out", str(tmp_path / "x.ckpt"), expect=2)
    assert "msr" in proc.stderr


def test_train_divergence_exit_code(workdir, tmp_path):
    run_cli("train", "--corpus", f"ctb={workdir / 'ctb.txt'}",
            "--corpus", f"pku={workdir / 'pku.txt'}",
            "--vocab", str(workdir / "vocab.txt"),
            "--out", str(tmp_path / "d.ckpt"),
            "--epochs", "4", "--batch-size", "1", "--lr", "1e160",
            "--d-h", "16", "--d-e", "8", "--layers", "1", "--heads", "2",
            "--d-ff", "32", "--max-len", "32", expect=4)


def test_train_seed_reproducible(workdir, tmp_path):
    args = ["train", "--corpus", f"ctb={workdir / 'ctb.txt'}",
            "--corpus", f"pku={workdir / 'pku.txt'}",
            "--dev", f"ctb={workdir / 'ctb.txt'}",
            "--vocab", str(workdir / "vocab.txt"),
            "--epochs", "3", "--batch-size", "2", "--lr", "1e-3",
            "--d-h", "16", "--d-e", "8", "--layers", "1", "--heads", "2",
            "--d-ff", "32", "--max-len", "32", "--seed", "7"]
    run_cli(*args, "--out", str(tmp_path / "a.ckpt"), "--metrics-log", str(tmp_path / "a.jsonl"))
    run_cli(*args, "--out", str(tmp_path / "b.ckpt"), "--metrics-log", str(tmp_path / "b.jsonl"))
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    records = [json.loads(line) for line in (tmp_path / "a.jsonl").read_text().splitlines()]
    assert {r["split"] for r in records} == {"train", "dev"}


# -- segment -----------------------------------------------------------------------

def test_segment_table_rows(trained):
    d = trained
    (d / "input.txt").write_text("李娜进入半决赛\n", encoding="utf-8")
    proc = run_cli("segment", "--checkpoint", str(d / "model.ckpt"),
                   "--vocab", str(d / "vocab.txt"), "--criterion", "ctb",
                   "--input", str(d / "input.txt"))
    assert proc.stdout == "李娜 进入 半决赛\n"
    proc = run_cli("segment", "--checkpoint", str(d / "model.ckpt"),
                   "--vocab", str(d / "vocab.txt"), "--criterion", "pku",
                   "--input", str(d / "input.txt"))
    assert proc.stdout == "李 娜 进入 半 决赛\n"


def test_segment_empty_input(trained, tmp_path):
    d = trained
    empty = tmp_path / "empty.txt"
    empty.write_text("", encoding="utf-8")
    out = tmp_path / "out.txt"
    run_cli("segment", "--checkpoint", str(d / "model.ckpt"),
            "--vocab", str(d / "vocab.txt"), "--criterion", "ctb",
            "--input", str(empty), "--output", str(out))
    assert out.read_text() == ""


def test_segment_unknown_criterion_lists_registered(trained):
    d = trained
    (d / "i2.txt").write_text("李娜\n", encoding="utf-8")
    proc = run_cli("segment", "--checkpoint", str(d / "model.ckpt"),
                   "--vocab", str(d / "vocab.txt"), "--criterion", "msr",
                   "--input", str(d / "i2.txt"), expect=2)
    assert "ctb" in proc.stderr and "pku" in proc.stderr


def test_segment_vocab_mismatch_refused(trained, tmp_path):
    d = trained
    (tmp_path / "other.txt").write_text("进入 了\n", encoding="utf-8")
    run_cli("build-vocab", "--corpus", f"ctb={tmp_path / 'other.txt'}",
            "--out", str(tmp_path / "otherv.txt"))
    (tmp_path / "i.txt").write_text("李娜\n", encoding="utf-8")
    proc = run_cli("segment", "--checkpoint", str(d / "model.ckpt"),
                   "--vocab", str(tmp_path / "otherv.txt"), "--criterion", "ctb",
                   "--input", str(tmp_path / "i.txt"), expect=2)
    assert "vocab" in proc.stderr


# -- evaluate -----------------------------------------------------------------------

def test_evaluate_oracle_hook(trained):
    d = trained
    proc = run_cli("evaluate", "--checkpoint", str(d / "model.ckpt"),
                   "--vocab", str(d / "vocab.txt"),
                   "--gold", f"ctb={d / 'ctb.txt'}", "--oracle-segmenter")
    assert "1.0000" in proc.stdout


def test_evaluate_two_criteria_with_avg(trained, tmp_path):
    d = trained
    report = tmp_path / "report.jsonl"
    proc = run_cli("evaluate", "--checkpoint", str(d / "model.ckpt"),
                   "--vocab", str(d / "vocab.txt"),
                   "--gold", f"ctb={d / 'ctb.txt'}", "--gold", f"pku={d / 'pku.txt'}",
                   "--report", str(report))
    lines = proc.stdout.splitlines()
    assert lines[0].split() == ["criterion", "precision", "recall", "f1", "oov_recall", "oov_total"]
    assert any(line.startswith("avg") for line in lines)
    records = [json.loads(line) for line in report.read_text().splitlines()]
    assert [r["criterion"] for r in records] == ["ctb", "pku"]
    for r in records:
        assert set(r) == {"criterion", "precision", "recall", "f1", "oov_recall", "oov_total"}
        assert r["f1"] == 1.0  # overfit on the training rows


def test_evaluate_overlong_line_is_data_error(trained, tmp_path):
    d = trained
    long_line = " ".join(["李娜"] * 40)
    (tmp_path / "long.txt").write_text(long_line + "\n", encoding="utf-8")
    proc = run_cli("evaluate", "--checkpoint", str(d / "model.ckpt"),
                   "--vocab", str(d / "vocab.txt"),
                   "--gold", f"ctb={tmp_path / 'long.txt'}", expect=3)
    assert "lines" in proc.stderr


# -- synth ---------------------------------------------------------------------------

def test_synth_writes_splits(tmp_path):
    proc = run_cli("synth", "--out-dir", str(tmp_path / "synth"),
                   "--train-sentences", "30", "--dev-sentences", "5",
                   "--test-sentences", "5", "--seed", "1")
    assert "boundary disagreement" in proc.stdout
    for name in ("join", "split"):
        for split, n in (("train", 30), ("dev", 5), ("test", 5)):
            path = tmp_path / "synth" / f"{name}.{split}.txt"
            assert path.exists()
            assert len(path.read_text(encoding="utf-8").splitlines()) == n
    # parallel text across criteria
    a = (tmp_path / "synth" / "join.train.txt").read_text(encoding="utf-8").splitlines()
    b = (tmp_path / "synth" / "split.train.txt").read_text(encoding="utf-8").splitlines()
    for la, lb in zip(a, b):
        assert la.replace(" ", "") == lb.replace(" ", "")


def test_synth_rejects_identical_rules(tmp_path):
    run_cli("synth", "--out-dir", str(tmp_path / "s2"),
            "--criteria", "a=run", "--criteria", "b=run", expect=2)
