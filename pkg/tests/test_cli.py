"""Command-line contract: exit codes, file formats, reproducibility."""

import json
import os

import numpy as np
import pytest

from ppolab import outputs
from ppolab.cli import main


def _run(args, tmp_path, name="out"):
    out = tmp_path / name
    code = main(args + ["--out", str(out)])
    return code, out


def test_run_writes_csv_and_manifest(tmp_path, capsys):
    code, out = _run(["run", "--experiment", "failure1", "--runs", "2", "--iterations", "4",
                      "--seed", "11", "--jobs", "1"], tmp_path)
    assert code == 0
    meta, rows = outputs.read_csv(out / "run_001.csv")
    assert meta["seed"] == "11" and meta["run"] == "1" and "config_hash" in meta
    assert list(rows[0]) == list(outputs.RECORD_COLUMNS) and len(rows) == 4
    man = json.loads((out / "manifest.json").read_text())
    assert man["schema_version"] == outputs.SCHEMA_VERSION and len(man["runs"]) == 2
    assert "converged" in capsys.readouterr().out


def test_rerun_is_byte_identical(tmp_path):
    args = ["run", "--experiment", "failure3", "--n-actions", "10", "--runs", "2",
            "--iterations", "5", "--seed", "3", "--jobs", "1"]
    _, a = _run(args, tmp_path, "a")
    _, b = _run(args, tmp_path, "b")
    for f in ("run_000.csv", "run_001.csv", "summary.json"):
        assert (a / f).read_bytes() == (b / f).read_bytes()


def test_parallel_matches_serial(tmp_path):
    args = ["run", "--experiment", "failure3", "--n-actions", "10", "--runs", "2",
            "--iterations", "3", "--seed", "5"]
    _, a = _run(args + ["--jobs", "1"], tmp_path, "a")
    _, b = _run(args + ["--jobs", "2"], tmp_path, "b")
    assert (a / "run_001.csv").read_bytes() == (b / "run_001.csv").read_bytes()


def test_config_file_and_flag_override(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"experiment": "failure3", "n_actions": 10, "runs": 1,
                               "iterations": 3, "seed": 9, "jobs": 1}))
    code, out = _run(["run", "--config", str(cfg), "--seed", "10"], tmp_path)
    assert code == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["seed"] == 10 and man["config"]["n_actions"] == 10
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"experiment": "failure1", "colour": "blue"}))
    assert main(["run", "--config", str(bad), "--out", str(tmp_path / "x")]) == 2


@pytest.mark.parametrize("args", [
    ["run", "--experiment", "nope"],
    ["run", "--runs", "0"],
    ["run", "--surrogate", "clip:-1"],
    ["regret", "--n", "10", "--eta", "1.5", "--skip-ppo"],
])
def test_config_errors_exit_2(tmp_path, args, capsys):
    assert main(args + ["--out", str(tmp_path / "o")]) == 2


def test_unwritable_output_exits_2(tmp_path):
    target = tmp_path / "file"
    target.write_text("")
    assert main(["landscape", "--out", str(target / "sub")]) == 2


def test_regret_refusal_message(tmp_path, capsys):
    assert main(["regret", "--n", "10", "--eta", "1.5", "--skip-ppo", "--out", str(tmp_path)]) == 2
    assert "eta < 1/rho" in capsys.readouterr().err


def test_regret_exact_ledger(tmp_path):
    code, out = _run(["regret", "--n", "10", "--K", "50", "--skip-ppo", "--runs", "2"], tmp_path)
    assert code == 0
    meta, rows = outputs.read_csv(out / "ledger_exact_001.csv")
    assert list(rows[0]) == list(outputs.LEDGER_COLUMNS) and len(rows) == 50
    assert all(r["holds"] == "true" for r in rows)


def test_gradcheck_command(capsys):
    assert main(["gradcheck", "--configs", "5"]) == 0
    assert "excluded" in capsys.readouterr().out.lower()


def test_diagnose_no_update_ratios_are_one(tmp_path):
    code, out = _run(["diagnose", "--policy", "gaussian", "--no-update", "--noiseless", "--svg"], tmp_path)
    assert code == 0
    _, rows = outputs.read_csv(out / "diagnose.csv")
    assert list(rows[0]) == list(outputs.DIAGNOSE_COLUMNS)
    np.testing.assert_array_equal([float(r["ratio"]) for r in rows], 1.0)
    assert (out / "diagnose.svg").exists()


def test_diagnose_after_update(tmp_path):
    code, out = _run(["diagnose", "--policy", "beta", "--iteration", "1"], tmp_path)
    assert code == 0
    _, rows = outputs.read_csv(out / "diagnose.csv")
    assert all(float(r["score_norm"]) >= 0 and float(r["grad_contrib"]) >= 0 for r in rows)
    assert main(["diagnose", "--experiment", "failure3", "--out", str(tmp_path / "d")]) == 2


def test_landscape_and_svg(tmp_path):
    code, out = _run(["landscape", "--experiment", "failure2", "--points", "11", "--svg"], tmp_path)
    assert code == 0
    _, rows = outputs.read_csv(out / "landscape.csv")
    assert len(rows) == 11 and float(rows[0]["action"]) == -5.0
    assert (out / "landscape.svg").read_text().startswith("<svg")


def test_sweep_csv(tmp_path):
    code, out = _run(["sweep", "--dims", "5,8", "--surrogates", "clip,rkl:3", "--runs", "1",
                      "--iterations", "3", "--jobs", "1", "--svg"], tmp_path)
    assert code == 0
    _, rows = outputs.read_csv(out / "sweep.csv")
    assert list(rows[0]) == list(outputs.SWEEP_COLUMNS) and len(rows) == 4
    assert {r["n"] for r in rows} == {"5", "8"}
    assert os.path.exists(out / "sweep.svg")


def test_run_svg_outputs(tmp_path):
    code, out = _run(["run", "--runs", "1", "--iterations", "3", "--svg", "--jobs", "1"], tmp_path)
    assert code == 0
    assert (out / "probe_reward.svg").exists() and (out / "density_run000.svg").exists()
