"""Command-line surface: pipeline flows and exit codes."""

import json

import numpy as np
import pytest

from gridharm.cli import main
from gridharm.fileio import read_fcm, write_fcm, write_measurements
from gridharm.harmonics import HarmonicConfig, relative_error


@pytest.fixture
def network_path(tmp_path):
    doc = {
        "max_order": 3,
        "nodes": [1, 2, 3],
        "root": 1,
        "lines": [
            {
                "nodes": [1, 2],
                "resistance": {"a": 0.05, "b": 0.06, "c": 0.04},
                "reactance": {"a": 0.1, "b": 0.95, "c": 0.15},
            },
            {
                "nodes": [1, 3],
                "resistance": {"a": 0.075, "b": 0.08, "c": 0.07},
                "reactance": {"a": 0.15, "b": 0.145, "c": 0.155},
            },
        ],
        "converters": [
            {"node": 1, "dc_current": 0.05, "fcm": {"synthetic": {"seed": 101}}},
            {"node": 2, "dc_current": 0.025, "fcm": {"synthetic": {"seed": 102}}},
            {"node": 3, "dc_current": 0.075, "fcm": {"synthetic": {"seed": 103}}},
            {"node": 1, "dc_current": 0.06, "fcm": {"synthetic": {"seed": 104}}},
        ],
    }
    path = tmp_path / "net.json"
    path.write_text(json.dumps(doc))
    return path


def test_simulate_then_estimate_matches_reduce(tmp_path, network_path):
    assert main([
        "simulate", "--network", str(network_path), "--T", "80",
        "--seed", "5", "--out-dir", str(tmp_path),
    ]) == 0
    assert main([
        "estimate-fcm",
        "--currents", str(tmp_path / "root_currents.csv"),
        "--voltages", str(tmp_path / "root_voltages.csv"),
        "--out", str(tmp_path / "est.fcm"),
    ]) == 0
    assert main([
        "reduce", "--network", str(network_path),
        "--out-fcm", str(tmp_path / "virtual.fcm"),
        "--out-report", str(tmp_path / "report.json"),
    ]) == 0

    estimated = read_fcm(tmp_path / "est.fcm")
    virtual = read_fcm(tmp_path / "virtual.fcm")
    assert relative_error(estimated.matrix, virtual.matrix) < 1e-18

    report = json.loads((tmp_path / "report.json").read_text())
    assert report["max_order"] == 3
    assert report["trace"]
    assert all(v < 1e12 for v in report["condition_numbers"].values())


def test_estimate_admittance_from_simulated_buses(tmp_path, network_path):
    main([
        "simulate", "--network", str(network_path), "--T", "40",
        "--seed", "6", "--out-dir", str(tmp_path),
    ])
    assert main([
        "estimate-admittance",
        "--bus-currents", str(tmp_path / "bus_currents.csv"),
        "--bus-voltages", str(tmp_path / "bus_voltages.csv"),
        "--network", str(network_path),
        "--out", str(tmp_path / "y.csv"),
    ]) == 0
    from gridharm.fileio import load_network, read_admittance
    from gridharm.network import assemble_harmonic_admittance

    recovered = read_admittance(tmp_path / "y.csv")
    truth = assemble_harmonic_admittance(load_network(network_path))
    assert relative_error(recovered.to_dense(), truth.to_dense()) < 1e-16


def test_online_cli_with_truth(tmp_path, network_path):
    main([
        "simulate", "--network", str(network_path), "--T", "70",
        "--seed", "7", "--out-dir", str(tmp_path),
    ])
    main([
        "reduce", "--network", str(network_path),
        "--out-fcm", str(tmp_path / "virtual.fcm"),
    ])
    assert main([
        "estimate-fcm-online",
        "--currents", str(tmp_path / "root_currents.csv"),
        "--voltages", str(tmp_path / "root_voltages.csv"),
        "--T", "50", "--truth", str(tmp_path / "virtual.fcm"),
        "--out", str(tmp_path / "online.csv"),
    ]) == 0
    lines = (tmp_path / "online.csv").read_text().splitlines()
    assert lines[0] == "step,residual,error"
    assert len(lines) == 21  # 70 samples - 50 window
    errors = [float(line.split(",")[2]) for line in lines[1:]]
    assert max(errors) < 1e-10  # noiseless stream tracks the virtual matrix


def test_experiment_cli_writes_tables(tmp_path):
    out = tmp_path / "exp"
    assert main([
        "experiment", "fcm_batch_sweep", "--K", "2", "--runs", "2",
        "--T", "40", "--noise", "0.001", "--out-dir", str(out),
    ]) == 0
    rows = (out / "fcm_batch_sweep_errors.csv").read_text().splitlines()
    assert rows[0] == "relative_std,samples,mean_error,runs"
    assert len(rows) == 2
    sidecar = json.loads((out / "fcm_batch_sweep_config.json").read_text())
    assert sidecar["runs"] == 2 and sidecar["max_order"] == 2


def test_validation_failures_exit_2(tmp_path, network_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"nodes": [1, 1], "root": 1, "lines": []}')
    assert main(["reduce", "--network", str(bad), "--out-fcm", str(tmp_path / "x.fcm")]) == 2

    cfg = HarmonicConfig(1)
    write_measurements(tmp_path / "i.csv", np.zeros((cfg.p, 3)), cfg)
    write_measurements(tmp_path / "v.csv", np.zeros((cfg.q, 4)), cfg)
    assert main([
        "estimate-fcm", "--currents", str(tmp_path / "i.csv"),
        "--voltages", str(tmp_path / "v.csv"), "--out", str(tmp_path / "f.fcm"),
    ]) == 2

    assert main([
        "experiment", "fcm_online", "--runs", "3", "--out-dir", str(tmp_path),
    ]) == 2  # fcm_online has no runs knob


def test_numerical_failures_exit_3(tmp_path):
    cfg = HarmonicConfig(1)
    rank_deficient = np.zeros((cfg.q, cfg.q + 2))
    rank_deficient[:, :2] = np.random.default_rng(0).standard_normal((cfg.q, 2))
    currents = np.zeros((cfg.p, cfg.q + 2))
    write_measurements(tmp_path / "i.csv", currents, cfg)
    write_measurements(tmp_path / "v.csv", rank_deficient, cfg)
    assert main([
        "estimate-fcm-online",
        "--currents", str(tmp_path / "i.csv"),
        "--voltages", str(tmp_path / "v.csv"),
        "--T", str(cfg.q), "--out", str(tmp_path / "o.csv"),
    ]) == 3
