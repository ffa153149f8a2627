"""On-disk formats: coupling matrices, measurements, networks, results.

All numeric files are plain CSV with short self-describing headers so any
plotting or analysis tool can consume them. Floats are written with
shortest round-trip precision, which keeps re-runs byte-identical.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .harmonics import Fcm, HarmonicConfig
from .network import HarmonicAdmittance, HarmonicNetwork, build_network


def _fmt(value: float) -> str:
    return repr(float(value))


# ---------------------------------------------------------------------------
# coupling matrix files: three integer header lines (K, p, q), then p rows
# of q comma-separated values


def write_fcm(path, fcm: Fcm):
    cfg = fcm.config
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(f"{cfg.max_order}\n{cfg.p}\n{cfg.q}\n")
        writer = csv.writer(fh)
        for row in fcm.matrix:
            writer.writerow([_fmt(v) for v in row])


def read_fcm(path) -> Fcm:
    path = Path(path)
    with path.open() as fh:
        try:
            max_order = int(fh.readline())
            p = int(fh.readline())
            q = int(fh.readline())
        except ValueError as exc:
            raise ValidationError(f"{path}: malformed coupling-matrix header") from exc
        cfg = HarmonicConfig(max_order)
        if (p, q) != (cfg.p, cfg.q):
            raise ValidationError(
                f"{path}: header dims ({p}, {q}) do not match order {max_order}"
            )
        matrix = np.loadtxt(fh, delimiter=",", ndmin=2)
    if matrix.shape != (p, q):
        raise ValidationError(f"{path}: expected {p} x {q} matrix, got {matrix.shape}")
    return Fcm(matrix)


# ---------------------------------------------------------------------------
# measurement files: one row per sample, canonical column order, and a
# comment header carrying the harmonic order, node count, and phase order


def write_measurements(path, matrix: np.ndarray, config: HarmonicConfig, n_nodes: int = 1):
    """Real samples (p x T or q x T, samples in columns) to CSV rows."""
    matrix = np.asarray(matrix, dtype=float)
    if matrix.shape[0] not in (config.p, config.q):
        raise ValidationError(
            f"matrix has {matrix.shape[0]} rows; expected p = {config.p} or q = {config.q}"
        )
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(f"# K={config.max_order} N={n_nodes} phases=abc\n")
        writer = csv.writer(fh)
        for sample in matrix.T:
            writer.writerow([_fmt(v) for v in sample])


def read_measurements(path):
    """Read a real measurement CSV; returns (matrix dim x T, metadata)."""
    path = Path(path)
    with path.open() as fh:
        header = fh.readline()
        meta = _parse_header(header, path)
        matrix = np.loadtxt(fh, delimiter=",", ndmin=2)
    cfg = HarmonicConfig(meta["K"])
    if matrix.shape[1] not in (cfg.p, cfg.q):
        raise ValidationError(
            f"{path}: {matrix.shape[1]} columns match neither p = {cfg.p} nor q = {cfg.q}"
        )
    return matrix.T, meta


def write_bus_measurements(path, matrix: np.ndarray, config: HarmonicConfig, n_nodes: int):
    """Complex bus samples (u x T) as interleaved re/im CSV rows."""
    matrix = np.asarray(matrix, dtype=complex)
    u = 3 * n_nodes * config.n_orders
    if matrix.shape[0] != u:
        raise ValidationError(f"matrix has {matrix.shape[0]} rows; expected u = {u}")
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(f"# K={config.max_order} N={n_nodes} phases=abc layout=bus\n")
        writer = csv.writer(fh)
        for sample in matrix.T:
            row = np.empty(2 * u)
            row[0::2] = sample.real
            row[1::2] = sample.imag
            writer.writerow([_fmt(v) for v in row])


def read_bus_measurements(path):
    path = Path(path)
    with path.open() as fh:
        header = fh.readline()
        meta = _parse_header(header, path)
        if meta.get("layout") != "bus":
            raise ValidationError(f"{path}: not a bus-level measurement file")
        raw = np.loadtxt(fh, delimiter=",", ndmin=2)
    cfg = HarmonicConfig(meta["K"])
    u = 3 * meta["N"] * cfg.n_orders
    if raw.shape[1] != 2 * u:
        raise ValidationError(f"{path}: expected {2 * u} columns, got {raw.shape[1]}")
    return (raw[:, 0::2] + 1j * raw[:, 1::2]).T, meta


def _parse_header(header: str, path) -> dict:
    if not header.startswith("#"):
        raise ValidationError(f"{path}: missing measurement header line")
    meta = {}
    for token in header[1:].split():
        if "=" not in token:
            continue
        key, value = token.split("=", 1)
        meta[key] = int(value) if value.isdigit() else value
    for required in ("K", "N", "phases"):
        if required not in meta:
            raise ValidationError(f"{path}: header is missing {required}")
    return meta


# ---------------------------------------------------------------------------
# network documents


def load_network_document(path) -> dict:
    path = Path(path)
    try:
        document = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON: {exc}") from exc
    # resolve coupling-matrix file references relative to the document
    for entry in document.get("converters", ()):
        payload = entry.get("fcm")
        if isinstance(payload, dict) and "file" in payload:
            payload["file"] = str((path.parent / payload["file"]).resolve())
    return document


def load_network(path) -> HarmonicNetwork:
    return build_network(load_network_document(path))


def save_network_document(path, document: dict):
    Path(path).write_text(json.dumps(document, indent=2) + "\n")


def three_node_document_path() -> Path:
    """The packaged 3-node example network document."""
    return Path(__file__).parent / "data" / "three_node.json"


# ---------------------------------------------------------------------------
# admittance files: sparse triplets per (order, phase, node pair)


def write_admittance(path, admittance: HarmonicAdmittance):
    path = Path(path)
    nodes = admittance.node_ids
    with path.open("w", newline="") as fh:
        fh.write(
            f"# K={admittance.config.max_order} N={admittance.n_nodes} phases=abc "
            f"nodes={','.join(str(n) for n in nodes)}\n"
        )
        writer = csv.writer(fh)
        writer.writerow(["order", "phase", "node_row", "node_col", "real", "imag"])
        for k in range(admittance.config.n_orders):
            for ph in range(3):
                block = admittance.blocks[k, ph]
                for i in range(len(nodes)):
                    for j in range(i + 1):
                        value = block[i, j]
                        if value != 0:
                            writer.writerow(
                                [k, "abc"[ph], nodes[i], nodes[j], _fmt(value.real), _fmt(value.imag)]
                            )


def read_admittance(path) -> HarmonicAdmittance:
    path = Path(path)
    with path.open() as fh:
        header = fh.readline()
        if not header.startswith("#"):
            raise ValidationError(f"{path}: missing admittance header")
        meta = {}
        for token in header[1:].split():
            if "=" in token:
                key, value = token.split("=", 1)
                meta[key] = value
        cfg = HarmonicConfig(int(meta["K"]))
        nodes = tuple(_maybe_int(n) for n in meta["nodes"].split(","))
        pos = {node: i for i, node in enumerate(nodes)}
        blocks = np.zeros((cfg.n_orders, 3, len(nodes), len(nodes)), dtype=complex)
        reader = csv.reader(fh)
        next(reader)  # column header
        for row in reader:
            if not row:
                continue
            k, ph = int(row[0]), "abc".index(row[1])
            i, j = pos[_maybe_int(row[2])], pos[_maybe_int(row[3])]
            value = float(row[4]) + 1j * float(row[5])
            blocks[k, ph, i, j] = value
            blocks[k, ph, j, i] = value
    return HarmonicAdmittance(cfg, nodes, blocks)


def _maybe_int(text: str):
    try:
        return int(text)
    except ValueError:
        return text


# ---------------------------------------------------------------------------
# result tables


def write_table(path, table):
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(table.columns)
        for row in table.rows:
            writer.writerow([_fmt(v) if isinstance(v, float) else v for v in row])


def write_json_sidecar(path, payload: dict):
    Path(path).write_text(json.dumps(payload, indent=2, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"not JSON serializable: {type(obj)!r}")
