import json
import subprocess
import sys

import numpy as np
import pytest
import yaml

import pompkit as pk
from pompkit import ConfigValidationError, ExperimentConfig
from pompkit.harness import run, summarize


def test_config_validation_collects_all_violations():
    with pytest.raises(ConfigValidationError) as err:
        ExperimentConfig.from_dict(
            {
                "model": "",
                "command": "warp",
                "replication": {"reps": 0, "start_box": {"a": [2, 1]}},
                "bogus": 1,
            }
        )
    text = str(err.value)
    assert "command" in text and "model is required" in text
    assert "reps" in text and "start_box" in text and "bogus" in text
    assert len(err.value.violations) >= 5


def test_config_requires_algorithm_fields():
    with pytest.raises(ConfigValidationError) as err:
        ExperimentConfig.from_dict({"model": "ou2", "command": "if2", "algorithm": {"J": 10}})
    assert any("M" in v for v in err.value.violations)
    assert any("pert.sigma" in v for v in err.value.violations)


def test_simulate_run_is_byte_identical(tmp_path):
    cfg = {
        "model": "ou2",
        "command": "simulate",
        "replication": {"reps": 1, "seed": 1},
        "n_obs": 20,
    }
    run(cfg, out=tmp_path / "a")
    run(cfg, out=tmp_path / "b")
    fa = (tmp_path / "a" / "rep000_data.csv").read_bytes()
    fb = (tmp_path / "b" / "rep000_data.csv").read_bytes()
    assert fa == fb


def _strip_timing(summary):
    out = json.loads(json.dumps(summary))
    for rep in out["replicates"]:
        rep.pop("wall_time", None)
    return out


def test_replicates_independent_of_worker_count(tmp_path):
    cfg = {
        "model": "ou2",
        "command": "pfilter",
        "algorithm": {"J": 60},
        "replication": {"reps": 4, "seed": 3},
    }
    s1 = run(cfg, out=tmp_path / "serial", jobs=1)
    s2 = run(cfg, out=tmp_path / "parallel", jobs=2)
    assert _strip_timing(s1) == _strip_timing(s2)


def test_start_box_draws_are_deterministic(tmp_path):
    cfg = {
        "model": "ou2",
        "command": "pfilter",
        "algorithm": {"J": 40},
        "replication": {"reps": 3, "seed": 5, "start_box": {"alpha.2": [-1.0, 0.0], "alpha.3": [0.0, 1.0]}},
    }
    s1 = run(cfg, out=tmp_path / "x")
    s2 = run(cfg, out=tmp_path / "y")
    starts1 = [r["start"] for r in s1["replicates"]]
    starts2 = [r["start"] for r in s2["replicates"]]
    assert starts1 == starts2
    a2 = [s["alpha.2"] for s in starts1]
    assert len(set(a2)) == 3
    assert all(-1.0 <= v <= 0.0 for v in a2)


def test_run_writes_provenance_and_summary(tmp_path):
    cfg = {
        "model": "gompertz",
        "command": "pfilter",
        "algorithm": {"J": 50},
        "replication": {"reps": 2, "seed": 9},
    }
    run(cfg, out=tmp_path)
    trace = (tmp_path / "rep001_pfilter.csv").read_text().splitlines()
    assert trace[0].startswith("# pompkit ")
    meta = json.loads(trace[0][len("# pompkit ") :])
    assert meta["rep"] == 1 and meta["seed"] == 9
    assert meta["config"]["model"] == "gompertz"
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert len(summary["replicates"]) == 2
    assert all("loglik" in r for r in summary["replicates"])


def test_kalman_command(tmp_path):
    cfg = {"model": "ou2", "command": "kalman", "replication": {"reps": 1, "seed": 1}}
    s = run(cfg, out=tmp_path)
    exact = pk.ou2_kalman(pk.OU2_TRUTH, pk.ou2_data()).loglik
    assert np.isclose(s["replicates"][0]["loglik"], exact)


def test_optimizer_command_reports_oracle_loglik(tmp_path):
    cfg = {
        "model": "ou2",
        "command": "if2",
        "algorithm": {"M": 2, "J": 60, "pert": {"sigma": {"alpha.2": 0.02, "alpha.3": 0.02}, "cooling": 0.95}},
        "replication": {"reps": 1, "seed": 2},
    }
    s = run(cfg, out=tmp_path)
    rep = s["replicates"][0]
    assert "oracle_loglik" in rep and "theta" in rep
    th = pk.ParamVector.from_dict(rep["theta"], pk.OU2_TRUTH.names)
    assert np.isclose(rep["oracle_loglik"], pk.ou2_kalman(th, pk.ou2_data()).loglik)


def _write_summary(dirpath, command, oracle_logliks):
    dirpath.mkdir(parents=True, exist_ok=True)
    payload = {
        "config": {"model": "ou2", "command": command},
        "seed": 1,
        "replicates": [{"rep": i, "oracle_loglik": v} for i, v in enumerate(oracle_logliks)],
    }
    (dirpath / "summary.json").write_text(json.dumps(payload))


def test_summarize_band_fractions_and_ordering(tmp_path):
    (tmp_path / "mle_cache.json").write_text(json.dumps({"loglik": -100.0}))
    _write_summary(tmp_path / "good", "if2", [-100.0, -101.0])
    _write_summary(tmp_path / "worse", "if1", [-120.0, -130.0])
    report = summarize(tmp_path)
    assert report["methods"]["if2"]["frac_within"]["2"] == 1.0
    assert report["methods"]["if1"]["frac_within"]["2"] == 0.0
    assert report["order"] == ["if2", "if1"]
    assert (tmp_path / "report_bands.csv").exists()


def test_summarize_single_run_at_max(tmp_path):
    (tmp_path / "mle_cache.json").write_text(json.dumps({"loglik": -50.0}))
    _write_summary(tmp_path, "avif", [-50.0])
    report = summarize(tmp_path)
    assert report["methods"]["avif"]["frac_within"]["2"] == 1.0


def test_summarize_empty_directory_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        summarize(tmp_path)


def test_cli_runs_and_validates(tmp_path):
    cfg_path = tmp_path / "exp.yaml"
    cfg_path.write_text(
        yaml.safe_dump(
            {
                "model": "gompertz",
                "algorithm": {"J": 30},
                "replication": {"reps": 1, "seed": 4},
            }
        )
    )
    out_dir = tmp_path / "out"
    res = subprocess.run(
        [sys.executable, "-m", "pompkit.cli", "pfilter", "--config", str(cfg_path), "--out", str(out_dir)],
        capture_output=True,
        text=True,
    )
    assert res.returncode == 0, res.stderr
    assert (out_dir / "summary.json").exists()

    bad = tmp_path / "bad.yaml"
    bad.write_text(yaml.safe_dump({"model": "gompertz", "algorithm": {}}))
    res2 = subprocess.run(
        [sys.executable, "-m", "pompkit.cli", "pfilter", "--config", str(bad), "--out", str(tmp_path / "o2")],
        capture_output=True,
        text=True,
    )
    assert res2.returncode == 2
    assert "invalid configuration" in res2.stderr
