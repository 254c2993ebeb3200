import json
import os

import numpy as np
import pytest
from click.testing import CliRunner

from markovgate.cli import main


@pytest.fixture
def runner():
    return CliRunner()


def test_simulate_deterministic_csv(runner, tmp_path):
    out1 = tmp_path / "a.csv"
    out2 = tmp_path / "b.csv"
    args = ["simulate", "--model", "ou", "--n", "100", "--seed", "7",
            "--burn-in", "50"]
    assert runner.invoke(main, args + ["--out", str(out1)]).exit_code == 0
    assert runner.invoke(main, args + ["--out", str(out2)]).exit_code == 0
    assert out1.read_bytes() == out2.read_bytes()
    header = out1.read_text().splitlines()[0]
    assert header == "index,time,value"
    assert len(out1.read_text().splitlines()) == 103


def test_simulate_rejects_bad_params(runner):
    res = runner.invoke(main, ["simulate", "--theta", "3.0"])
    assert res.exit_code == 2


def test_test_command_reports(runner, tmp_path):
    src = tmp_path / "path.csv"
    res = runner.invoke(main, ["simulate", "--n", "500", "--seed", "3",
                               "--out", str(src)])
    assert res.exit_code == 0
    out_csv = tmp_path / "report.csv"
    res = runner.invoke(main, ["test", "--input", str(src), "--statistic",
                               "t1_star", "--bootstrap", "9", "--no-plugin",
                               "--out", str(out_csv)])
    assert res.exit_code == 0, res.output
    assert "statistic       t1_star" in res.output
    assert "p (bootstrap)" in res.output
    header = out_csv.read_text().splitlines()[0]
    assert header.startswith("kind,statistic,n_used")


def test_test_command_plugin_fields(runner, tmp_path):
    src = tmp_path / "path.csv"
    runner.invoke(main, ["simulate", "--n", "500", "--seed", "4",
                         "--out", str(src)])
    res = runner.invoke(main, ["test", "--input", str(src),
                               "--statistic", "t2"])
    assert res.exit_code == 0, res.output
    assert "p (chi2)" in res.output
    assert "z-score" in res.output


def test_bandwidth_command(runner, tmp_path):
    src = tmp_path / "path.csv"
    runner.invoke(main, ["simulate", "--n", "300", "--seed", "5",
                         "--out", str(src)])
    res = runner.invoke(main, ["bandwidth", "--input", str(src)])
    assert res.exit_code == 0
    names = [line.split()[0] for line in res.output.strip().splitlines()]
    assert names == ["b1", "b2", "h1", "h2", "h3"]


def test_size_command_and_outputs(runner, tmp_path):
    cfg = {
        "model": {"variant": "ou_null"},
        "sim": {"n_obs": 300, "burn_in": 100},
        "mc_reps": 3, "bootstrap_B": 9, "alpha_levels": [0.05],
        "master_seed": 2, "output_dir": str(tmp_path / "out"),
    }
    cfg_file = tmp_path / "cfg.json"
    cfg_file.write_text(json.dumps(cfg))
    res = runner.invoke(main, ["size", "--config", str(cfg_file)])
    assert res.exit_code == 0, res.output
    out = tmp_path / "out"
    table = (out / "size.csv").read_text()
    assert table.startswith("family,s_or_jumptype,alpha,theta,")
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "size"


def test_config_error_exit_code(runner, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{ nope")
    res = runner.invoke(main, ["size", "--config", str(bad)])
    assert res.exit_code == 2
    bad.write_text(json.dumps({"statistic": "t7"}))
    res = runner.invoke(main, ["power", "--config", str(bad)])
    assert res.exit_code == 2


def test_numerical_failure_exit_code(runner, tmp_path):
    # at this sample size one rep's bootstrap exceeds the replicate-failure
    # ceiling (degenerate tail windows), so the run aborts with code 3
    src_cfg = {
        "model": {"variant": "ou_null"},
        "sim": {"n_obs": 200, "burn_in": 100},
        "mc_reps": 5, "bootstrap_B": 9, "alpha_levels": [0.05],
        "master_seed": 7, "output_dir": str(tmp_path / "o"),
    }
    f = tmp_path / "c.json"
    f.write_text(json.dumps(src_cfg))
    res = runner.invoke(main, ["size", "--config", str(f)])
    assert res.exit_code == 3


def test_bootstrap_density_command(runner, tmp_path):
    cfg = {
        "sim": {"n_obs": 400, "burn_in": 100},
        "mc_reps": 5, "pooled_B": 2, "master_seed": 9,
        "output_dir": str(tmp_path / "bd"),
    }
    f = tmp_path / "cfg.json"
    f.write_text(json.dumps(cfg))
    res = runner.invoke(main, ["bootstrap-density", "--config", str(f)])
    assert res.exit_code == 0, res.output
    out = tmp_path / "bd"
    assert (out / "bootstrap_density.csv").exists()
    summary = json.loads((out / "bootstrap_density_summary.json").read_text())
    assert 0.0 <= summary["ks_distance"] <= 1.0
