from pathlib import Path

from monoseq.cli import main
from monoseq.manifest import read_manifest, replay_manifest


def run(*args) -> int:
    return main([str(a) for a in args])


def pipeline(tmp: Path, seed=5, epochs=2, order=2, n=120):
    """synth -> split -> align -> train(pcrf) -> decode -> eval; returns paths."""
    paths = {
        "corpus": tmp / "corpus.tsv",
        "train": tmp / "train.tsv",
        "test": tmp / "test.tsv",
        "align_model": tmp / "align.model",
        "aligned": tmp / "aligned.txt",
        "pcrf": tmp / "model.pcrf",
        "preds": tmp / "preds.txt",
        "report": tmp / "report",
    }
    assert run("synth", "--rule", "local_sub", "--alphabet", "aeimnorst",
               "--n", n, "--seed", seed, "--out", paths["corpus"]) == 0
    assert run("split", "--in", paths["corpus"], "--train", int(n * 0.8),
               "--test", int(n * 0.2), "--seed", 1,
               "--out-train", paths["train"], "--out-test", paths["test"]) == 0
    assert run("align", "--in", paths["train"], "--out-model", paths["align_model"],
               "--out-aligned", paths["aligned"], "--L", 2, "--max-iters", 8) == 0
    assert run("train", "--aligned", paths["aligned"], "--model-kind", "pcrf",
               "--out", paths["pcrf"], "--align-model", paths["align_model"],
               "--order", order, "--window", 2, "--epochs", epochs, "--seed", 3) == 0
    assert run("decode", "--model", paths["pcrf"], "--in", paths["test"],
               "--out", paths["preds"]) == 0
    assert run("eval", "--preds", paths["preds"], "--refs", paths["test"],
               "--out-prefix", paths["report"]) == 0
    return paths


def test_full_pipeline(tmp_path):
    paths = pipeline(tmp_path)
    preds = paths["preds"].read_text().splitlines()
    refs = paths["test"].read_text().splitlines()
    assert len(preds) == len(refs)
    csv = (tmp_path / "report.csv").read_text()
    assert csv.startswith("bucket_lo,bucket_hi,count,wac\n")
    assert (tmp_path / "report.txt").exists()
    assert (tmp_path / "report.json").exists()
    m = read_manifest(str(paths["pcrf"]) + ".manifest")
    assert m["subcommand"] == "train"
    assert m["order"] == "2"
    assert m["window"] == "2"
    assert float(m["train_seconds"]) > 0


def test_align_manifest_counts_skips(tmp_path):
    bad = tmp_path / "c.tsv"
    bad.write_text("ab\tab\ncd\tcd\na\tabc\n", encoding="utf-8")
    assert run("align", "--in", bad, "--out-model", tmp_path / "a.model",
               "--out-aligned", tmp_path / "a.txt", "--L", 2) == 0
    m = read_manifest(str(tmp_path / "a.model") + ".manifest")
    assert m["skipped_infeasible"] == "1"


def test_identity_like_decode(tmp_path):
    paths = pipeline(tmp_path, n=150, epochs=3)
    # sanity: a mostly-identity task should decode mostly correctly
    preds = paths["preds"].read_text().splitlines()
    refs = [l.split("\t")[1] for l in paths["test"].read_text().splitlines()]
    acc = sum(p == r for p, r in zip(preds, refs)) / len(refs)
    assert acc > 0.8


def test_jointngram_train_and_decode(tmp_path):
    paths = pipeline(tmp_path)
    glm = tmp_path / "model.glm"
    assert run("train", "--aligned", paths["aligned"], "--model-kind", "jointngram",
               "--out", glm, "--n", 4) == 0
    out = tmp_path / "glm_preds.txt"
    assert run("decode", "--model", glm, "--in", paths["test"], "--out", out,
               "--beam", 8) == 0
    assert len(out.read_text().splitlines()) == len(
        paths["test"].read_text().splitlines()
    )
    m = read_manifest(str(glm) + ".manifest")
    assert m["n"] == "4" and m["model_kind"] == "jointngram"


def test_unknown_model_kind_usage_error(tmp_path):
    rc = run("train", "--aligned", tmp_path / "x", "--model-kind", "nope",
             "--out", tmp_path / "y")
    assert rc == 2


def test_missing_subcommand_usage_error():
    assert main([]) == 2


def test_corrupted_model_header(tmp_path):
    paths = pipeline(tmp_path)
    bad = tmp_path / "bad.pcrf"
    text = paths["pcrf"].read_text()
    bad.write_text("monoseq.pcrf.v9999\n" + text.split("\n", 1)[1])
    rc = run("decode", "--model", bad, "--in", paths["test"],
             "--out", tmp_path / "nope.txt")
    assert rc == 1


def test_missing_input_runtime_error(tmp_path):
    assert run("align", "--in", tmp_path / "missing.tsv",
               "--out-model", tmp_path / "m", "--out-aligned", tmp_path / "a") == 1


def test_decode_empty_input(tmp_path):
    paths = pipeline(tmp_path)
    empty = tmp_path / "empty.txt"
    empty.write_text("")
    out = tmp_path / "empty_preds.txt"
    assert run("decode", "--model", paths["pcrf"], "--in", empty,
               "--out", out, "--input-format", "lines") == 0
    assert out.read_text() == ""


def test_decode_plain_lines(tmp_path):
    paths = pipeline(tmp_path)
    lines = tmp_path / "plain.txt"
    lines.write_text("mino\nrast\n", encoding="utf-8")
    out = tmp_path / "plain_preds.txt"
    assert run("decode", "--model", paths["pcrf"], "--in", lines,
               "--out", out, "--input-format", "lines") == 0
    assert len(out.read_text().splitlines()) == 2


def test_decode_threads_identical(tmp_path):
    paths = pipeline(tmp_path)
    out2 = tmp_path / "preds2.txt"
    assert run("decode", "--model", paths["pcrf"], "--in", paths["test"],
               "--out", out2, "--threads", 2) == 0
    assert out2.read_text() == paths["preds"].read_text()


def test_eval_half_correct_renders_50(tmp_path):
    refs = tmp_path / "refs.tsv"
    refs.write_text("ab\tx\ncd\ty\n", encoding="utf-8")
    preds = tmp_path / "p.txt"
    preds.write_text("x\nz\n", encoding="utf-8")
    assert run("eval", "--preds", preds, "--refs", refs,
               "--out-prefix", tmp_path / "r") == 0
    assert "50.00%" in (tmp_path / "r.txt").read_text()


def test_eval_custom_buckets_row_count(tmp_path):
    refs = tmp_path / "refs.tsv"
    refs.write_text("ab\tx\nabcdefgh\ty\n", encoding="utf-8")
    preds = tmp_path / "p.txt"
    preds.write_text("x\ny\n", encoding="utf-8")
    assert run("eval", "--preds", preds, "--refs", refs,
               "--out-prefix", tmp_path / "r", "--buckets", "5,10,15,20") == 0
    lines = (tmp_path / "r.csv").read_text().strip().split("\n")
    assert len(lines) == 1 + 5 + 1  # header + 5 buckets + totals


def test_report_reemit_identical(tmp_path):
    paths = pipeline(tmp_path)
    assert run("report", "--report", tmp_path / "report.json",
               "--out-prefix", tmp_path / "again") == 0
    assert (tmp_path / "again.csv").read_text() == (tmp_path / "report.csv").read_text()
    assert (tmp_path / "again.txt").read_text() == (tmp_path / "report.txt").read_text()


def test_manifest_replay_reproduces_outputs(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert run("synth", "--rule", "identity", "--n", 30, "--seed", 2,
               "--out", "c.tsv") == 0
    first = Path("c.tsv").read_bytes()
    Path("c.tsv").unlink()
    assert replay_manifest("c.tsv.manifest") == 0
    assert Path("c.tsv").read_bytes() == first
