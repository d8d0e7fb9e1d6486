import hashlib
import json
import subprocess
import sys

import numpy as np
import pytest

from hod import cli, modelio
from hod.evaluation import reports_from_csv
from hod.preprocess import Mode
from hod.sim import read_series_csv


def run(*argv):
    return cli.main([str(a) for a in argv])


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert run("simulate", "--kind", "one-hand", "--duration", 120, "--seed", 1,
               "--out", d / "a.csv") == 0
    assert run("simulate", "--kind", "four-finger", "--duration", 120, "--seed", 2,
               "--out", d / "b.csv") == 0
    assert run("preprocess", d / "a.csv", d / "b.csv", "--out", d / "g.hodw") == 0
    return d


@pytest.fixture(scope="module")
def stream(tmp_path_factory):
    d = tmp_path_factory.mktemp("stream")
    # ten 5 s touches, each followed by 5 s of release
    assert run("simulate", "--kind", "one-hand", "--duration", 105, "--seed", 8,
               "--out", d / "s.csv") == 0
    return d / "s.csv"


@pytest.fixture
def model_file(tmp_path, tdnn50):
    path = tmp_path / "m.hodm"
    modelio.save(path, tdnn50, Mode.GRADIENT)
    return path


def test_usage_errors_exit_2(capsys):
    with pytest.raises(SystemExit) as e:
        run("train")
    assert e.value.code == 2
    with pytest.raises(SystemExit) as e:
        run("frobnicate")
    assert e.value.code == 2


def test_unknown_model_kind(workdir, tmp_path):
    with pytest.raises(SystemExit) as e:
        run("train", workdir / "g.hodw", "--model", "svm", "--size", 3, "--out", tmp_path / "x")
    assert e.value.code == 2


def test_invalid_duration_fails_without_output(tmp_path):
    out = tmp_path / "z.csv"
    assert run("simulate", "--duration", 0, "--out", out) == 1
    assert not out.exists()


def test_missing_input_fails(tmp_path):
    assert run("preprocess", tmp_path / "missing.csv", "--out", tmp_path / "w.hodw") == 1


def test_simulate_writes_series_and_manifest(workdir):
    s = read_series_csv(workdir / "a.csv")
    assert len(s) == 60000
    man = json.loads((workdir / "a.csv.json").read_text())
    assert man["command"] == "simulate" and man["seed"] == 1 and man["samples"] == 60000
    assert len(man["config_hash"]) == 64


def test_simulate_rerun_is_byte_identical(workdir, tmp_path):
    out = tmp_path / "again.csv"
    run("simulate", "--kind", "one-hand", "--duration", 120, "--seed", 1, "--out", out)
    assert sha(out) == sha(workdir / "a.csv")


@pytest.mark.slow
def test_simulate_default_duration(tmp_path):
    out = tmp_path / "long.csv"
    assert run("simulate", "--out", out) == 0
    assert json.loads((tmp_path / "long.csv.json").read_text())["samples"] == 900000


def test_preprocess_manifest(workdir):
    man = json.loads((workdir / "g.hodw.json").read_text())
    assert man["normalization"]["mode"] == "gradient"
    on, off = man["class_counts"]
    assert on == off and man["windows"] == on + off


def test_train_tdnn_50_and_rerun(workdir, tmp_path):
    a, b = tmp_path / "a.hodm", tmp_path / "b.hodm"
    for out in (a, b):
        assert run("train", workdir / "g.hodw", "--model", "tdnn", "--size", 50,
                   "--epochs", 2, "--out", out) == 0
    assert a.stat().st_size == 20420
    assert sha(a) == sha(b)
    man = json.loads((tmp_path / "a.hodm.json").read_text())
    assert man["report"]["bytes"] == 20420


def test_train_mode_mismatch_refused(workdir, tmp_path):
    assert run("train", workdir / "g.hodw", "--model", "tdnn", "--size", 1, "--mode", "absolute",
               "--out", tmp_path / "m") == 2


def test_train_and_evaluate_forest(workdir, tmp_path, capsys):
    out = tmp_path / "rf.hodm"
    assert run("train", workdir / "g.hodw", "--model", "rf", "--size", 3, "--out", out) == 0
    capsys.readouterr()
    assert run("evaluate", out, workdir / "g.hodw", "--out", tmp_path / "e.json") == 0
    res = json.loads((tmp_path / "e.json").read_text())
    assert res["accuracy"] > 0.95 and sum(res["confusion"].values()) == res["windows"]


def test_bench_restricted_grid(workdir, tmp_path):
    assert run("preprocess", workdir / "a.csv", workdir / "b.csv", "--mode", "absolute",
               "--out", tmp_path / "abs.hodw") == 0
    out = tmp_path / "r.csv"
    assert run("bench", "--windows", tmp_path / "abs.hodw", workdir / "g.hodw", "--only", "tdnn",
               "--epochs", 1, "--out", out) == 0
    reports = reports_from_csv(out.read_text())
    assert len(reports) == 10
    assert {r.mode for r in reports} == {"absolute", "gradient"}
    assert out.with_suffix(".txt").exists()


def test_bench_empty_grid_is_usage_error(workdir, tmp_path):
    assert run("bench", "--windows", workdir / "g.hodw", workdir / "g.hodw", "--only", "tdnn",
               "--size", 7, "--out", tmp_path / "r.csv") == 2


def test_detect_counts_touches(model_file, stream, tmp_path, capsys):
    events = tmp_path / "ev.csv"
    summary = tmp_path / "sum.json"
    assert run("detect", model_file, stream, "--out", events, "--summary", summary,
               "--threshold", 1.12e-10) == 0
    s = json.loads(summary.read_text())
    truth = read_series_csv(stream).on_intervals()
    assert s["events"] == {"on": len(truth), "off": len(truth)} and len(truth) == 10
    rows = events.read_text().splitlines()
    assert rows[0] == "index,time_s,event,latency_ms" and len(rows) == 21
    assert [r.split(",")[2] for r in rows[1:]] == ["on", "off"] * 10
    lat = s["latency_s"]
    assert lat["hands-on"]["count"] == lat["hands-off"]["count"] == 10
    assert lat["hands-on"]["timeouts"] == lat["hands-off"]["timeouts"] == 0


def test_detect_refuses_wrong_mode(model_file, stream, capsys):
    assert run("detect", model_file, stream, "--mode", "absolute") == 2
    assert "holds a gradient model, --mode says absolute" in capsys.readouterr().err


def test_detect_plain_values_from_stdin(model_file):
    values = "\n".join(str(v) for v in np.full(300, 1.5e-11)) + "\n"
    proc = subprocess.run([sys.executable, "-m", "hod.cli", "detect", str(model_file), "-"],
                          input=values, capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.strip() == "index,time_s,event,latency_ms"
    assert json.loads(proc.stderr)["samples"] == 300


def test_detect_empty_input(model_file):
    proc = subprocess.run([sys.executable, "-m", "hod.cli", "detect", str(model_file)],
                          input="", capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stderr)["events"] == {"on": 0, "off": 0}
