import json
import subprocess
import sys

import numpy as np
import pytest

from sdpexplain.cli import main
from sdpexplain.data import write_csv
from sdpexplain.forest import Dataset


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr().out
    return code, json.loads(out) if out.strip() else None, out


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--kind", "linear_switch", "--n", "600", "--p", "8", "--csv",
                 str(d / "d.csv"), "--truth", str(d / "t.csv"), "--no-timestamp",
                 "--out", str(d / "synth.json")]) == 0
    assert main(["train", "--data", str(d / "d.csv"), "--model", str(d / "m.npz"), "--k", "6",
                 "--test-fraction", "0.2", "--no-timestamp", "--out", str(d / "train.json")]) == 0
    return d


def test_train_report(workdir):
    rep = json.loads((workdir / "train.json").read_text())
    assert rep["n_train"] == 480 and rep["n_test"] == 120
    assert rep["config"]["subcommand"] == "train" and "created" not in rep
    assert len(rep["split_frequency"]) == 8 and rep["test_score"]["r2"] > 0.5


def test_explain_deterministic(workdir, capsys):
    argv = ["explain", "--model", workdir / "m.npz", "--rows", "0,3", "--s", "5", "--no-timestamp"]
    c1, doc, out1 = run(capsys, *argv)
    c2, _, out2 = run(capsys, *argv)
    assert c1 == c2 == 0 and out1 == out2
    inst = doc["explanations"]
    assert [i["instance_id"] for i in inst] == [0, 3]
    assert all(len(i["lxi"]) == 8 for i in inst)


def test_rule_and_global_sr(workdir, capsys):
    code, doc, _ = run(capsys, "rule", "--model", workdir / "m.npz", "--rows", "1", "--s", "5",
                       "--no-timestamp")
    assert code == 0
    rules = doc["rules"][0]["rules"]
    assert rules and all(r["text"].startswith("IF ") for r in rules)
    rpath = workdir / "r.json"
    code, doc, _ = run(capsys, "global-sr", "--model", workdir / "m.npz", "--max-instances", "4",
                       "--s", "5", "--rules-out", rpath, "--no-timestamp")
    assert code == 0 and doc["n_instances"] == 4
    code, doc, _ = run(capsys, "eval", "--model", workdir / "m.npz", "--rules", rpath,
                       "--max-instances", "50", "--no-timestamp")
    assert code == 0 and 0.0 <= doc["rules"]["coverage"] <= 1.0


def test_eval_discovery(workdir, capsys):
    code, doc, _ = run(capsys, "eval", "--model", workdir / "m.npz", "--data", workdir / "d.csv",
                       "--truth", workdir / "t.csv", "--p-mse", "--max-instances", "10",
                       "--s", "5", "--no-timestamp")
    assert code == 0
    assert 0 <= doc["discovery"]["tpr"] <= 1 and doc["p_mse"] >= 0


@pytest.mark.parametrize("argv,code", [
    (["explain", "--model", "nope.npz"], "missing_file"),
    (["explain", "--model", "{m}", "--pi", "1.5"], "invalid_argument"),
    (["explain", "--model", "{m}", "--rows", "99999"], "invalid_argument"),
    (["explain", "--model", "{m}", "--train-data", "{bad}"], "hash_mismatch"),
    (["train", "--data", "{junk}", "--model", "{tmp}"], "bad_input"),
    (["explain", "--model", "{junk}"], "bad_model"),
    (["eval", "--model", "{m}"], "invalid_argument"),
])
def test_error_codes(workdir, capsys, argv, code):
    junk = workdir / "junk.csv"
    junk.write_text("a,y\n1,x\n")
    bad = workdir / "bad.csv"
    write_csv(Dataset(np.zeros((5, 8)), np.zeros(5)), bad)
    fmt = {"m": workdir / "m.npz", "bad": bad, "junk": junk, "tmp": workdir / "tmp.npz"}
    rc, doc, _ = run(capsys, *[a.format(**fmt) for a in argv])
    assert rc == 1 and doc["error"]["code"] == code and doc["error"]["message"]


def test_single_feature_explain(tmp_path, capsys):
    rng = np.random.default_rng(0)
    X = rng.normal(size=(200, 1))
    write_csv(Dataset(X, (X[:, 0] > 0).astype(int), ["a"], "classification"), tmp_path / "c.csv")
    assert main(["train", "--data", str(tmp_path / "c.csv"), "--task", "clf", "--k", "4",
                 "--model", str(tmp_path / "c.npz"), "--no-timestamp"]) == 0
    capsys.readouterr()
    code, doc, _ = run(capsys, "explain", "--model", tmp_path / "c.npz", "--rows", "0",
                       "--no-timestamp")
    assert code == 0 and doc["explanations"][0]["mse"][0]["features"] == [0]


def test_console_script_exit_code(tmp_path):
    p = subprocess.run([sys.executable, "-m", "sdpexplain.cli", "explain", "--model",
                        str(tmp_path / "missing.npz")], capture_output=True, text=True)
    assert p.returncode == 1
    assert json.loads(p.stdout)["error"]["code"] == "missing_file"
