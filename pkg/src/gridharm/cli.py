"""Command-line interface.

Subcommands cover the full pipeline: simulate measurements from a network
document, estimate coupling matrices (batch and online) and harmonic
admittances from measurement files, reduce a network to its virtual
coupling matrix, and run the packaged experiments.

Exit codes: 0 on success, 2 for validation problems (bad documents,
malformed files, unknown names), 3 for numerical failures (singular or
ill-conditioned systems).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import fileio
from .errors import NumericalError, ValidationError
from .estimation import (
    MeasurementBatch,
    NetworkMeasurementBatch,
    OnlineFcmEstimator,
    estimate_admittance,
    estimate_fcm_batch,
)
from .experiments import EXPERIMENTS, run_experiment
from .harmonics import HarmonicConfig, relative_error
from .network import bus_arrays, solve_harmonic_network
from .reduction import reduce_tree
from .scenarios import ConverterInputSpec, NoiseModel, add_measurement_noise, rms_magnitude


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridharm",
        description="Harmonic coupling simulation, reduction, and estimation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="sample root/bus measurements from a network document")
    sim.add_argument("--network", required=True, help="network document (JSON)")
    sim.add_argument("--T", type=int, default=100, dest="samples", help="number of samples")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--noise", type=float, default=0.0, help="relative measurement noise")
    sim.add_argument("--voltage-spec", help="JSON file overriding the root-voltage distribution")
    sim.add_argument("--out-dir", default=".", help="where the CSV files go")
    sim.set_defaults(func=_cmd_simulate)

    est = sub.add_parser("estimate-fcm", help="batch coupling-matrix estimate from a CSV pair")
    est.add_argument("--currents", required=True)
    est.add_argument("--voltages", required=True)
    est.add_argument("--out", required=True, help="output coupling-matrix file")
    est.set_defaults(func=_cmd_estimate_fcm)

    onl = sub.add_parser("estimate-fcm-online", help="sliding-window estimation over a CSV pair")
    onl.add_argument("--currents", required=True)
    onl.add_argument("--voltages", required=True)
    onl.add_argument("--T", type=int, default=0, dest="window",
                     help="window length (default: twice the voltage dimension)")
    onl.add_argument("--refresh", type=int, default=1000, help="inverse refresh interval")
    onl.add_argument("--truth", help="coupling-matrix file to compute per-step errors against")
    onl.add_argument("--out", required=True, help="per-step output CSV")
    onl.set_defaults(func=_cmd_estimate_fcm_online)

    adm = sub.add_parser("estimate-admittance", help="harmonic admittance from bus CSVs")
    adm.add_argument("--bus-currents", required=True)
    adm.add_argument("--bus-voltages", required=True)
    adm.add_argument("--network", required=True, help="network document supplying the topology")
    adm.add_argument("--out", required=True, help="output admittance file")
    adm.set_defaults(func=_cmd_estimate_admittance)

    red = sub.add_parser("reduce", help="virtual coupling matrix of a network document")
    red.add_argument("--network", required=True)
    red.add_argument("--out-fcm", required=True, help="output coupling-matrix file")
    red.add_argument("--out-report", help="optional JSON report (conditioning, trace)")
    red.set_defaults(func=_cmd_reduce)

    exp = sub.add_parser("experiment", help="run a packaged experiment")
    exp.add_argument("name", choices=sorted(EXPERIMENTS))
    exp.add_argument("--config", help="JSON config file")
    exp.add_argument("--out-dir", default=".", help="where result tables go")
    exp.add_argument("--seed", type=int)
    exp.add_argument("--runs", type=int)
    exp.add_argument("--K", type=int, dest="max_order")
    exp.add_argument("--T", type=int, dest="samples")
    exp.add_argument("--noise", type=float)
    exp.set_defaults(func=_cmd_experiment)

    return parser


# ---------------------------------------------------------------------------


def _cmd_simulate(args) -> int:
    net = fileio.load_network(args.network)
    cfg = net.config
    spec = _voltage_spec(args.voltage_spec)
    rng = np.random.default_rng(args.seed)
    mean = spec.mean_vector(cfg)
    voltages = mean[:, None] + rng.normal(0.0, spec.std, (cfg.p, args.samples))
    solution = solve_harmonic_network(net, voltages)

    root_v = np.vstack([voltages, np.ones(args.samples)])
    root_i = solution.root_injection
    bus_v, bus_i = bus_arrays(solution)
    if args.noise > 0:
        noise = NoiseModel(args.noise, int(rng.integers(2 ** 62)))
        root_i = add_measurement_noise(root_i, noise, rms_magnitude(root_i))
        noise = NoiseModel(args.noise, int(rng.integers(2 ** 62)))
        root_v = add_measurement_noise(root_v, noise, rms_magnitude(root_v[:cfg.p]))
        noise = NoiseModel(args.noise, int(rng.integers(2 ** 62)))
        bus_i = add_measurement_noise(bus_i, noise, rms_magnitude(bus_i))
        noise = NoiseModel(args.noise, int(rng.integers(2 ** 62)))
        bus_v = add_measurement_noise(bus_v, noise, rms_magnitude(bus_v))

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fileio.write_measurements(out / "root_currents.csv", root_i, cfg)
    fileio.write_measurements(out / "root_voltages.csv", root_v, cfg)
    fileio.write_bus_measurements(out / "bus_currents.csv", bus_i, cfg, len(net.nodes))
    fileio.write_bus_measurements(out / "bus_voltages.csv", bus_v, cfg, len(net.nodes))
    print(f"wrote {args.samples} samples to {out}")
    return 0


def _voltage_spec(path) -> ConverterInputSpec:
    if path is None:
        return ConverterInputSpec()
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"voltage spec {path}: {exc}") from exc
    kwargs = {}
    if "fundamental_means" in raw:
        kwargs["fundamental_means"] = tuple(complex(re, im) for re, im in raw["fundamental_means"])
    for key in ("decay_base", "std", "dc_current"):
        if key in raw:
            kwargs[key] = float(raw[key])
    return ConverterInputSpec(**kwargs)


def _cmd_estimate_fcm(args) -> int:
    batch = _load_batch(args.currents, args.voltages)
    estimate = estimate_fcm_batch(batch)
    fileio.write_fcm(args.out, estimate.fcm)
    flag = "yes" if estimate.rank_deficient else "no"
    print(f"wrote {args.out} (rank {estimate.rank}, rank deficient: {flag})")
    return 0


def _load_batch(currents_path, voltages_path) -> MeasurementBatch:
    currents, meta_i = fileio.read_measurements(currents_path)
    voltages, meta_v = fileio.read_measurements(voltages_path)
    if meta_i["K"] != meta_v["K"]:
        raise ValidationError(
            f"harmonic order mismatch: K={meta_i['K']} currents vs K={meta_v['K']} voltages"
        )
    return MeasurementBatch(currents, voltages)


def _cmd_estimate_fcm_online(args) -> int:
    batch = _load_batch(args.currents, args.voltages)
    q = batch.voltages.shape[0]
    window = args.window or 2 * q
    if batch.n_samples <= window:
        raise ValidationError(
            f"need more than {window} samples to stream (got {batch.n_samples})"
        )
    truth = fileio.read_fcm(args.truth) if args.truth else None

    init = MeasurementBatch(batch.currents[:, :window], batch.voltages[:, :window])
    estimator = OnlineFcmEstimator(init, refresh_interval=args.refresh)
    rows = []
    for step, t in enumerate(range(window, batch.n_samples), start=1):
        estimate = estimator.step(batch.currents[:, t], batch.voltages[:, t])
        currents_w, voltages_w = estimator.window
        residual = float(np.linalg.norm(currents_w - estimate.matrix @ voltages_w))
        row = [step, residual]
        if truth is not None:
            row.append(relative_error(estimate.matrix, truth.matrix))
        rows.append(row)

    out = Path(args.out)
    with out.open("w", newline="") as fh:
        header = "step,residual" + (",error" if truth is not None else "")
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(repr(v) if isinstance(v, float) else str(v) for v in row) + "\n")
    print(f"wrote {len(rows)} steps to {out}")
    return 0


def _cmd_estimate_admittance(args) -> int:
    net = fileio.load_network(args.network)
    currents, meta_i = fileio.read_bus_measurements(args.bus_currents)
    voltages, meta_v = fileio.read_bus_measurements(args.bus_voltages)
    if meta_i["K"] != meta_v["K"] or meta_i["N"] != meta_v["N"]:
        raise ValidationError("bus measurement headers disagree")
    cfg = HarmonicConfig(meta_i["K"])
    if meta_i["N"] != len(net.nodes):
        raise ValidationError(
            f"measurements carry {meta_i['N']} nodes but the network has {len(net.nodes)}"
        )
    batch = NetworkMeasurementBatch(currents, voltages, net.nodes, cfg)
    estimate = estimate_admittance(batch, list(net.lines))
    fileio.write_admittance(args.out, estimate.admittance)
    flag = "yes" if estimate.rank_deficient else "no"
    print(f"wrote {args.out} (rank deficient: {flag})")
    return 0


def _cmd_reduce(args) -> int:
    net = fileio.load_network(args.network)
    report = reduce_tree(net)
    fileio.write_fcm(args.out_fcm, report.fcm)
    if args.out_report:
        payload = {
            "max_order": net.config.max_order,
            "worst_condition": report.worst_condition,
            "condition_numbers": {str(k): v for k, v in report.condition_numbers.items()},
            "trace": report.trace,
        }
        fileio.write_json_sidecar(args.out_report, payload)
    print(f"wrote {args.out_fcm} (worst propagation condition {report.worst_condition:.3g})")
    return 0


#: per-experiment meaning of the --T and --noise shortcuts
_T_KEYS = {
    "admittance_sweep": ("sample_counts", "list"),
    "fcm_batch_sweep": ("sample_counts", "list"),
    "fcm_online": ("window_samples", "scalar"),
    "reduction_validation": ("window_samples", "scalar"),
}
_NOISE_KEYS = {
    "admittance_sweep": ("noise_levels", "list"),
    "fcm_batch_sweep": ("noise_levels", "list"),
    "fcm_online": ("noise", "scalar"),
}


def _cmd_experiment(args) -> int:
    config = {}
    if args.config:
        try:
            config = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"config {args.config}: {exc}") from exc
        if not isinstance(config, dict):
            raise ValidationError("experiment config must be a JSON object")
    if args.seed is not None:
        config["seed"] = args.seed
    if args.runs is not None:
        config["runs"] = args.runs
    if args.max_order is not None:
        config["max_order"] = args.max_order
    if args.samples is not None:
        key, kind = _T_KEYS[args.name]
        config[key] = [args.samples] if kind == "list" else args.samples
    if args.noise is not None:
        if args.name not in _NOISE_KEYS:
            raise ValidationError(f"experiment {args.name!r} takes no --noise flag")
        key, kind = _NOISE_KEYS[args.name]
        config[key] = [args.noise] if kind == "list" else args.noise

    result = run_experiment(args.name, config)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for table in result.tables.values():
        fileio.write_table(out / f"{result.name}_{table.name}.csv", table)
    fileio.write_json_sidecar(out / f"{result.name}_config.json", result.config)
    for table in result.tables.values():
        print(f"{result.name}/{table.name}: {len(table.rows)} rows")
    return 0


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
