import json
import subprocess
import sys

import numpy as np
import pytest

from tood.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, EXIT_VERIFY, main, read_scores
from tood.datasets import load_csv, save_csv
from tood.theory import xor_dataset


def run(*args):
    return main([str(a) for a in args])


def test_synth_hypercube_and_shapes(tmp_path):
    out = tmp_path / "test.csv"
    assert run("synth", "--kind", "hypercube", "--n", 2, "--a1", 0, "--b1", 1, "--a2", 1,
               "--count", 1000, "--seed", 7, "--out", out) == EXIT_OK
    d = load_csv(out)
    assert d.n_samples == 1000 and d.features.min() >= 1.0
    circ = tmp_path / "c.csv"
    assert run("synth", "--kind", "circles", "--n", 10, "--count", 50, "--out", circ) == EXIT_OK
    d = load_csv(circ, label_column="label")
    assert d.n_features == 10 and d.n_classes == 2


def test_usage_errors(tmp_path, capsys):
    assert run("synth", "--kind", "nope", "--out", tmp_path / "x.csv") == EXIT_USAGE
    assert "invalid choice" in capsys.readouterr().err
    assert run("verify", "thm9") == EXIT_USAGE
    assert run() == EXIT_USAGE
    assert run("synth", "--kind", "hypercube", "--a2", 5, "--out", tmp_path / "x.csv") == EXIT_USAGE


@pytest.fixture
def xor_csv(tmp_path):
    p = tmp_path / "xor.csv"
    save_csv(xor_dataset(), p)
    return p


def test_fit_on_xor_fixture(tmp_path, xor_csv):
    model = tmp_path / "m.tood"
    assert run("fit", "--train", xor_csv, "--label-column", "label", "--no-bootstrap",
               "--out", model) == EXIT_OK
    summary = json.loads((tmp_path / "m.tood.summary.json").read_text())
    assert summary["leaf_counts"] == [4] * 100 and summary["mean_leaf_count"] == 4.0
    assert summary["run_config"]["forest"]["n_estimators"] == 100
    assert "wall_seconds" in summary["runtime"]


def test_fit_without_labels_is_data_error(tmp_path, xor_csv, capsys):
    assert run("fit", "--train", xor_csv, "--out", tmp_path / "m.tood") == EXIT_DATA
    assert "label" in capsys.readouterr().err


def test_fit_latent_preset_and_shuffle(tmp_path, xor_csv):
    big = tmp_path / "big.csv"
    run("synth", "--kind", "tabular", "--count", 400, "--out", big)
    assert run("fit", "--train", big, "--label-column", "label", "--preset", "latent",
               "--n-estimators", 5, "--shuffle-labels", "--seed", 3, "--out", tmp_path / "m") == 0
    s = json.loads((tmp_path / "m.summary.json").read_text())
    assert s["run_config"]["forest"]["min_samples_leaf"] == 100
    assert s["run_config"]["shuffle_labels"] is True


def _pipeline(tmp_path, tag, jobs="1"):
    train, test = tmp_path / "train.csv", tmp_path / "test.csv"
    if not train.exists():
        run("synth", "--kind", "tabular", "--count", 1500, "--seed", 1, "--out", train)
        run("synth", "--kind", "uniform", "--n", 8, "--count", 600, "--seed", 2, "--out", test)
    model = tmp_path / f"m{tag}.tood"
    assert run("fit", "--train", train, "--label-column", "label", "--scale", "--n-estimators", 20,
               "--jobs", jobs, "--out", model) == EXIT_OK
    scores = tmp_path / f"s{tag}.csv"
    assert run("score", "--model", model, "--data", test, "--batch-size", 200, "--repeats", 3,
               "--out", scores) == EXIT_OK
    return model, scores


def test_score_outputs_and_determinism(tmp_path):
    model, scores = _pipeline(tmp_path, "a")
    _, scores_b = _pipeline(tmp_path, "b", jobs="3")
    assert model.read_bytes() == (tmp_path / "mb.tood").read_bytes()
    assert scores.read_bytes() == scores_b.read_bytes()
    head = scores.read_text().splitlines()
    assert head[0] == "sample_index,repeat,aphd" and len(head) == 601
    meta = json.loads((tmp_path / "sa.csv.meta.json").read_text())
    meta_b = json.loads((tmp_path / "sb.csv.meta.json").read_text())
    assert meta["scores_written"] == 600
    assert len(meta["model_fingerprint"]) == 64
    for m in (meta, meta_b):
        m.pop("runtime")
        for k in ("out", "model"):
            m["run_config"].pop(k)
    meta["run_config"].pop("meta")
    meta_b["run_config"].pop("meta")
    assert meta == meta_b


def test_score_single_exact_batch(tmp_path):
    model, _ = _pipeline(tmp_path, "c")
    out = tmp_path / "one.csv"
    assert run("score", "--model", model, "--data", tmp_path / "test.csv", "--batch-size", 600,
               "--repeats", 1, "--out", out) == EXIT_OK
    assert len(read_scores(out)) == 600


def test_score_dimension_mismatch(tmp_path, xor_csv, capsys):
    model, _ = _pipeline(tmp_path, "d")
    assert run("score", "--model", model, "--data", xor_csv, "--label-column", "label",
               "--batch-size", 2, "--out", tmp_path / "x.csv") == EXIT_DATA
    err = capsys.readouterr().err
    assert "8" in err and "1" in err


def test_score_corrupt_model(tmp_path, xor_csv):
    bad = tmp_path / "bad.tood"
    bad.write_bytes(b"garbage")
    assert run("score", "--model", bad, "--data", xor_csv, "--out", tmp_path / "x.csv") == EXIT_DATA


def _write_scores(path, values):
    path.write_text("sample_index,repeat,aphd\n" + "".join(
        f"{i},0,{v!r}\n" for i, v in enumerate(values)))


def test_eval(tmp_path, capsys):
    pos, neg = tmp_path / "pos.csv", tmp_path / "neg.csv"
    _write_scores(pos, [0.99, 0.98, 0.97, 0.995])
    _write_scores(neg, [0.1, 0.2, 0.0])
    out = tmp_path / "r.json"
    assert run("eval", "--pos", pos, "--neg", neg, "--threshold", 0.5, "--out", out) == EXIT_OK
    r = json.loads(out.read_text())
    assert r["report"]["auroc"] == 1.0 and r["report"]["fpr_at_95"] == 0.0
    assert r["threshold"]["tp"] == 4 and r["threshold"]["fp"] == 0
    printed = capsys.readouterr().out
    assert "100" in printed and "AUROC" in printed
    assert run("eval", "--pos", pos, "--neg", pos, "--out", out) == EXIT_OK
    assert json.loads(out.read_text())["report"]["auroc"] == 0.5


def test_eval_empty_file(tmp_path):
    empty = tmp_path / "e.csv"
    empty.write_text("sample_index,repeat,aphd\n")
    full = tmp_path / "f.csv"
    _write_scores(full, [0.5])
    assert run("eval", "--pos", empty, "--neg", full) == EXIT_DATA


def test_verify_commands(tmp_path):
    out = tmp_path / "v.json"
    assert run("verify", "thm2", "--K", 4, "--out", out) == EXIT_OK
    reps = json.loads(out.read_text())
    assert reps[0]["predicted"] == 0.75 and reps[0]["passed"]
    assert reps[0]["run_config"]["check"] == "thm2"
    assert run("verify", "lemma1", "--forests", 2, "--pairs", 100, "--out", out) == EXIT_OK
    reps = json.loads(out.read_text())
    assert reps[0]["name"] == "lemma1-xor" and reps[0]["observed"] == 0
    first = out.read_bytes()
    run("verify", "lemma1", "--forests", 2, "--pairs", 100, "--out", out)
    assert out.read_bytes() == first


def test_verify_thm3_quick(tmp_path):
    out = tmp_path / "v.json"
    assert run("verify", "thm3", "--n", 1, "--a2", 0.5, "--train-count", 20000,
               "--out", out) == EXIT_OK
    r = json.loads(out.read_text())[0]
    assert r["predicted"] == 0.75 and abs(r["observed"] - 0.75) <= 0.05


def test_verify_failure_exit_code(tmp_path):
    # with a tiny sample the shifted-cube estimate misses its tolerance
    code = run("verify", "thm3", "--n", 3, "--a2", 0.5, "--train-count", 50, "--trees", 3,
               "--out", tmp_path / "v.json")
    assert code == EXIT_VERIFY


def test_lemma1_on_saved_model(tmp_path):
    model, _ = _pipeline(tmp_path, "e")
    assert run("verify", "lemma1", "--model", model, "--probes", tmp_path / "test.csv",
               "--out", tmp_path / "v.json") == EXIT_OK


def test_entry_point_help():
    r = subprocess.run([sys.executable, "-m", "tood.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "verify" in r.stdout


def test_read_scores_bare_column(tmp_path):
    p = tmp_path / "s.txt"
    p.write_text("0.5\n0.25\n")
    np.testing.assert_array_equal(read_scores(p), [0.5, 0.25])
