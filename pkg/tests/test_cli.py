import csv

import pytest

from tabsense import bundle as bundle_io
from tabsense.cli import main
from tabsense.synthetic import context_corpus

FAST = """\
corpus.min_support=5
lda.topics=4
lda.iterations=20
lda.infer_iterations=10
lda.infer_burn_in=5
network.subnet_hidden=8
network.subnet_out=4
network.primary_hidden=8
train.epochs=3
train.learning_rate=0.01
crf.epochs=2
"""


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    raw = root / "raw"
    raw.mkdir()
    for t in context_corpus(60, seed=2):
        with open(raw / f"{t.id}.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow([c.header_raw for c in t.columns])
            w.writerows(zip(*(c.cells for c in t.columns)))
    (root / "fast.cfg").write_text(FAST, encoding="utf-8")
    assert main(["ingest", str(raw), "--out", str(root / "ing"), "--folds", "3", "--config", str(root / "fast.cfg")]) == 0
    assert main(["train", str(root / "ing" / "manifest.txt"), "--out", str(root / "m.bin"),
                 "--config", str(root / "fast.cfg"), "--folds", str(root / "ing" / "folds.tsv"), "--fold", "0"]) == 0
    return root


def test_ingest_outputs(workspace):
    ing = workspace / "ing"
    assert len((ing / "manifest.txt").read_text().splitlines()) == 60
    assert set((ing / "vocab.txt").read_text().split()) == {"name", "birthPlace", "age", "company", "location", "rank"}
    folds = [line.split("\t") for line in (ing / "folds.tsv").read_text().splitlines()]
    assert {f for f, _ in folds} == {"0", "1", "2"} and len(folds) == 60


def test_train_is_deterministic(workspace):
    out = workspace / "again.bin"
    main(["train", str(workspace / "ing" / "manifest.txt"), "--out", str(out), "--config", str(workspace / "fast.cfg"),
          "--folds", str(workspace / "ing" / "folds.tsv"), "--fold", "0"])
    assert out.read_bytes() == (workspace / "m.bin").read_bytes()


def test_predict_shape(workspace, capsys):
    table = workspace / "raw" / "ctx00000.csv"
    capsys.readouterr()
    assert main(["predict", str(workspace / "m.bin"), str(table), "--mode", "base"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 3
    vocab = set(bundle_io.load(workspace / "m.bin").vocabulary.names)
    for j, line in enumerate(lines):
        tid, idx, name, conf = line.split("\t")
        assert tid == str(table) and int(idx) == j and name in vocab and 0 < float(conf) <= 1


def test_predict_to_file(workspace):
    out = workspace / "pred.tsv"
    assert main(["predict", str(workspace / "m.bin"), str(workspace / "raw"), "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 180


def test_evaluate(workspace):
    out = workspace / "eval"
    assert main(["evaluate", str(workspace / "m.bin"), str(workspace / "ing" / "manifest.txt"),
                 "--folds", str(workspace / "ing" / "folds.tsv"), "--fold", "0", "--out", str(out)]) == 0
    for mode in ("base", "notopic", "nostruct", "full"):
        assert (out / f"report_{mode}.tsv").read_text().startswith("type\tprecision\trecall\tf1\tsupport\n")
    assert (out / "delta_full_vs_base.tsv").exists()
    assert "Sato_noStruct" in (out / "summary.json").read_text()


def test_inspect_topics(workspace, capsys):
    capsys.readouterr()
    assert main(["inspect-topics", str(workspace / "m.bin"), "-k", "2"]) == 0
    rows = [line.split("\t") for line in capsys.readouterr().out.splitlines()]
    assert len(rows) == 4
    scores = [float(r[1]) for r in rows]
    assert scores == sorted(scores, reverse=True)
    assert all(len(r[2].split(",")) == 2 for r in rows)


def test_ablate(workspace):
    out = workspace / "abl"
    assert main(["ablate", str(workspace / "ing" / "manifest.txt"), "--config", str(workspace / "fast.cfg"),
                 "--folds", str(workspace / "ing" / "folds.tsv"), "--fold", "1", "--out", str(out)]) == 0
    lines = (out / "ablation.tsv").read_text().splitlines()
    assert [line.split("\t")[0] for line in lines[1:]] == ["Base", "Sato_noTopic", "Sato_noStruct", "Sato"]
    assert (out / "ablation.json").exists() and (out / "fold0_full.tsv").exists()


def test_missing_stage_error(workspace, capsys):
    slim = workspace / "slim.bin"
    assert main(["train", str(workspace / "ing" / "manifest.txt"), "--out", str(slim), "--config",
                 str(workspace / "fast.cfg"), "--no-crf"]) == 0
    capsys.readouterr()
    assert main(["predict", str(slim), str(workspace / "raw" / "ctx00001.csv"), "--mode", "full"]) == 1
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1
    code, kind, message = err[0].split("\t")
    assert (code, kind) == ("error", "missing_stage") and "crf" in message
    assert main(["predict", str(slim), str(workspace / "raw" / "ctx00001.csv"), "--mode", "nostruct"]) == 0


@pytest.mark.parametrize("argv,kind", [
    (["predict", "nope.bin", "x.csv"], "not_found"),
    (["ingest", "no/such/dir", "--out", "o"], "not_found"),
])
def test_errors_are_one_line(argv, kind, capsys, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == 1
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and err[0].split("\t")[:2] == ["error", kind]


def test_bad_model_file(tmp_path, capsys):
    junk = tmp_path / "junk.bin"
    junk.write_bytes(b"garbage")
    assert main(["inspect-topics", str(junk)]) == 1
    assert capsys.readouterr().err.startswith("error\tbad_model\t")


def test_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["predict"])
    assert exc.value.code != 0
