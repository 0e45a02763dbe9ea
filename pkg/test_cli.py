#!/usr/bin/env python3
"""
Test the command line: workflows, artifacts and exit codes
"""

import csv
import json
import math

import pytest

from cli import build_parser, main
from experiment_runner import EXIT_CONFIG, EXIT_OK, probe_names

SMALL = ["--set", "grid.n=16", "--set", "time.T=0.25", "--set", "time.M=8"]


def read_rows(path):
    with open(path, newline="") as handle:
        return list(csv.DictReader(handle))


def test_parser_knows_every_workflow():
    parser = build_parser()
    for command in ("simulate", "picard", "verify", "calibrate-mu0", "serve"):
        assert parser.parse_args([command]).command == command
    args = parser.parse_args(["probe", "kernel", "--set", "grid.n=32", "--set", "time.dt=0.01"])
    assert args.name == "kernel"
    assert args.overrides == ["grid.n=32", "time.dt=0.01"]


def test_simulate_cosine_decays(tmp_path):
    out = tmp_path / "cos"
    code = main([
        "simulate", "--out", str(out), *SMALL,
        "--set", "initial.preset=cosx", "--set", "initial.amplitude=1.0",
        "--set", "time.dt=0.001", "--set", "time.n_steps=1000", "--set", "time.save_every=250",
    ])
    assert code == EXIT_OK
    rows = read_rows(out / "manifest.csv")
    assert [int(row["step"]) for row in rows] == [0, 250, 500, 750, 1000]
    assert float(rows[-1]["time"]) == pytest.approx(1.0)
    assert float(rows[-1]["linf"]) == pytest.approx(math.exp(-1.0), abs=1e-6)
    assert (out / "resolved_config.cfg").is_file()
    assert (out / "norms_final.csv").is_file()
    assert len(list((out / "snapshots").glob("snap_*.qgf"))) == 5


def test_simulate_zero_data_stays_zero(tmp_path):
    out = tmp_path / "zero"
    code = main(["simulate", "--out", str(out), *SMALL, "--set", "initial.preset=zero", "--set", "time.n_steps=20"])
    assert code == EXIT_OK
    for row in read_rows(out / "manifest.csv"):
        assert float(row["linf"]) == 0.0
        assert float(row["l2"]) == 0.0


def test_seed_flag_selects_random_data(tmp_path):
    first, second = tmp_path / "a", tmp_path / "b"
    args = [*SMALL, "--set", "time.n_steps=10", "--set", "time.save_every=10"]
    assert main(["simulate", "--out", str(first), "--seed", "3", *args]) == EXIT_OK
    assert main(["simulate", "--out", str(second), "--seed", "3", *args]) == EXIT_OK
    assert read_rows(first / "manifest.csv") == read_rows(second / "manifest.csv")
    assert "initial.seed = 3" in (first / "resolved_config.cfg").read_text()


def test_picard_workflow_writes_iterations(tmp_path):
    out = tmp_path / "picard"
    code = main(["picard", "--out", str(out), *SMALL, "--set", "initial.amplitude=0.02", "--set", "calibration.mu0=1.0"])
    assert code == EXIT_OK
    rows = read_rows(out / "picard_iterations.csv")
    assert rows[0]["diff_norm"] == ""
    assert float(rows[-1]["diff_norm"]) <= 1e-10
    assert (out / "picard_limit.qgf").is_file()
    snapshots = sorted(path.name for path in (out / "picard_snapshots").glob("snap_*.qgf"))
    # one snapshot per node t_0 .. t_M
    assert snapshots == [f"snap_{index:05d}.qgf" for index in range(9)]
    assert len(read_rows(out / "picard_manifest.csv")) == 9


def test_probe_workflow(tmp_path):
    out = tmp_path / "probe"
    code = main(["probe", "max_principle", "--out", str(out), *SMALL, "--set", "initial.preset=cosx", "--set", "time.n_steps=50"])
    assert code == EXIT_OK
    rows = read_rows(out / "probes.csv")
    assert rows[0]["name"] == "max_principle"
    assert rows[0]["status"] == "pass"


def test_verify_runs_the_selection(tmp_path):
    out = tmp_path / "verify"
    code = main([
        "verify", "--out", str(out), *SMALL,
        "--set", "initial.preset=cosx", "--set", "time.n_steps=50", "--set", "time.save_every=10",
        "--set", "probes.selection=max_principle, riesz_growth, gronwall, persistence",
    ])
    assert code == EXIT_OK
    names = [row["name"] for row in read_rows(out / "probes.csv")]
    assert names == ["max_principle", "riesz_growth", "gronwall", "persistence"]
    assert (out / "persistence.csv").is_file()


@pytest.mark.slow
def test_default_verify_passes(tmp_path):
    out = tmp_path / "default"
    assert main(["verify", "--out", str(out)]) == EXIT_OK
    assert all(row["status"] in ("pass", "skipped") for row in read_rows(out / "probes.csv"))


def test_calibrate_writes_record(tmp_path):
    out = tmp_path / "calib"
    code = main([
        "calibrate-mu0", "--out", str(out), "--set", "grid.n=16", "--set", "time.T=0.25", "--set", "time.M=4",
        "--set", "calibration.seeds=0", "--set", "calibration.k_max=3", "--set", "calibration.bisection_steps=2",
    ])
    assert code == EXIT_OK
    record = json.loads((out / "calibration.json").read_text())
    assert record["mu0_empirical"] > 0
    assert record["seeds"] == [0]


def test_configuration_errors_exit_with_two(tmp_path):
    assert main(["simulate", "--out", str(tmp_path), "--set", "grid.n=100"]) == EXIT_CONFIG
    assert main(["simulate", "--out", str(tmp_path), "--set", "grid.colour=blue"]) == EXIT_CONFIG
    assert main(["simulate", "--config", str(tmp_path / "missing.cfg")]) == EXIT_CONFIG
    assert main(["probe", "no_such_probe", "--out", str(tmp_path), *SMALL]) == EXIT_CONFIG


def test_probe_registry():
    names = probe_names()
    for name in ("kernel", "bilinear", "gronwall", "max_principle", "riesz_growth", "persistence", "fluctuation"):
        assert name in names
