"""Round trips and validation for every file format."""

import numpy as np
import pytest

from gridharm.errors import ValidationError
from gridharm.experiments import ResultTable
from gridharm.fileio import (
    load_network,
    load_network_document,
    read_admittance,
    read_bus_measurements,
    read_fcm,
    read_measurements,
    save_network_document,
    write_admittance,
    write_bus_measurements,
    write_fcm,
    write_measurements,
    write_table,
)
from gridharm.harmonics import Fcm, HarmonicConfig
from gridharm.network import assemble_harmonic_admittance
from gridharm.scenarios import three_node_network


def test_fcm_file_round_trip(tmp_path, small_config):
    rng = np.random.default_rng(0)
    fcm = Fcm(rng.standard_normal((small_config.p, small_config.q)))
    path = tmp_path / "m.fcm"
    write_fcm(path, fcm)
    back = read_fcm(path)
    assert np.array_equal(back.matrix, fcm.matrix)  # exact: repr round trip
    header = path.read_text().splitlines()[:3]
    assert header == ["2", str(small_config.p), str(small_config.q)]


def test_fcm_file_header_mismatch(tmp_path):
    path = tmp_path / "bad.fcm"
    path.write_text("2\n5\n6\n")
    with pytest.raises(ValidationError):
        read_fcm(path)


def test_measurement_round_trip(tmp_path, small_config):
    rng = np.random.default_rng(1)
    data = rng.standard_normal((small_config.q, 7))
    path = tmp_path / "v.csv"
    write_measurements(path, data, small_config)
    back, meta = read_measurements(path)
    assert np.array_equal(back, data)
    assert meta == {"K": 2, "N": 1, "phases": "abc"}


def test_measurement_header_required(tmp_path):
    path = tmp_path / "x.csv"
    path.write_text("1.0,2.0\n")
    with pytest.raises(ValidationError, match="header"):
        read_measurements(path)


def test_measurement_wrong_width_rejected(tmp_path, small_config):
    path = tmp_path / "w.csv"
    path.write_text("# K=2 N=1 phases=abc\n1.0,2.0,3.0\n")
    with pytest.raises(ValidationError, match="columns"):
        read_measurements(path)


def test_bus_measurement_round_trip(tmp_path):
    cfg = HarmonicConfig(1)
    rng = np.random.default_rng(2)
    u = 3 * 3 * cfg.n_orders
    data = rng.standard_normal((u, 4)) + 1j * rng.standard_normal((u, 4))
    path = tmp_path / "bus.csv"
    write_bus_measurements(path, data, cfg, n_nodes=3)
    back, meta = read_bus_measurements(path)
    assert np.array_equal(back, data)
    assert meta["layout"] == "bus"


def test_bus_reader_rejects_plain_measurements(tmp_path, small_config):
    path = tmp_path / "v.csv"
    write_measurements(path, np.zeros((small_config.p, 2)), small_config)
    with pytest.raises(ValidationError, match="bus"):
        read_bus_measurements(path)


def test_network_document_round_trip(tmp_path):
    doc = {
        "max_order": 2,
        "nodes": [1, 2],
        "root": 1,
        "lines": [
            {
                "nodes": [1, 2],
                "resistance": {"a": 0.05, "b": 0.06, "c": 0.04},
                "reactance": {"a": 0.1, "b": 0.95, "c": 0.15},
            }
        ],
        "converters": [
            {"node": 2, "dc_current": 0.05, "fcm": {"synthetic": {"seed": 1}}}
        ],
    }
    path = tmp_path / "net.json"
    save_network_document(path, doc)
    assert load_network_document(path) == doc
    net = load_network(path)
    assert net.n_converters == 1


def test_network_fcm_file_payload(tmp_path, small_config):
    rng = np.random.default_rng(3)
    fcm = Fcm(rng.standard_normal((small_config.p, small_config.q)))
    write_fcm(tmp_path / "conv.fcm", fcm)
    doc = {
        "max_order": 2,
        "nodes": [1],
        "root": 1,
        "lines": [],
        "converters": [{"node": 1, "dc_current": 0.1, "fcm": {"file": "conv.fcm"}}],
    }
    save_network_document(tmp_path / "net.json", doc)
    net = load_network(tmp_path / "net.json")  # relative path resolved
    assert np.array_equal(net.node_converters(1)[0].fcm.matrix, fcm.matrix)


def test_invalid_json_rejected(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    with pytest.raises(ValidationError, match="JSON"):
        load_network_document(path)


def test_admittance_round_trip(tmp_path):
    cfg = HarmonicConfig(2)
    truth = assemble_harmonic_admittance(three_node_network(cfg))
    path = tmp_path / "y.csv"
    write_admittance(path, truth)
    back = read_admittance(path)
    assert back.node_ids == (1, 2, 3)
    assert np.abs(back.to_dense() - truth.to_dense()).max() == 0.0


def test_result_table_write(tmp_path):
    table = ResultTable("demo", ["x", "err"])
    table.add(1, 0.125)
    table.add(2, 3.5e-7)
    path = tmp_path / "demo.csv"
    write_table(path, table)
    lines = path.read_text().splitlines()
    assert lines[0] == "x,err"
    assert lines[1] == "1,0.125"
    assert float(lines[2].split(",")[1]) == 3.5e-7
