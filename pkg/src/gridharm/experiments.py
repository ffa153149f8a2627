"""Experiment runners: Monte-Carlo sweeps and the reduction validation.

Each experiment takes a configuration mapping (unknown keys are
rejected), runs fully seeded, and returns CSV-ready result tables.
Re-running with the same configuration reproduces the tables exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .harmonics import HarmonicConfig, relative_error
from .estimation import (
    MeasurementBatch,
    NetworkMeasurementBatch,
    OnlineFcmEstimator,
    estimate_admittance,
    estimate_fcm_batch,
)
from .network import assemble_harmonic_admittance, solve_harmonic_network
from .reduction import reduce_tree
from .scenarios import (
    ConverterInputSpec,
    SyntheticConverterSpec,
    THREE_NODE_DC_CURRENTS,
    jittered_three_node_lines,
    rms_magnitude,
    sample_bus_voltages,
    sample_converter_voltages,
    synth_converter_fcm,
    three_node_network,
    three_node_voltage_spec,
)


@dataclass
class ResultTable:
    name: str
    columns: list
    rows: list = field(default_factory=list)

    def add(self, *values):
        if len(values) != len(self.columns):
            raise ValidationError(
                f"table {self.name!r} expects {len(self.columns)} values, got {len(values)}"
            )
        self.rows.append(tuple(values))

    def column(self, name) -> list:
        idx = self.columns.index(name)
        return [row[idx] for row in self.rows]


@dataclass
class ExperimentResult:
    name: str
    config: dict
    tables: dict


def _resolve_config(user: dict | None, defaults: dict, name: str) -> dict:
    config = dict(defaults)
    for key, value in (user or {}).items():
        if key not in defaults:
            raise ValidationError(f"unknown {name} config key {key!r}")
        config[key] = value
    return config


def _run_rng(seed: int, *path) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, path)]))


# ---------------------------------------------------------------------------
# admittance estimation sweeps


ADMITTANCE_DEFAULTS = {
    "max_order": 50,
    "runs": 100,
    "seed": 1811,
    "noise_levels": (0.001, 0.005, 0.01, 0.02),
    "noise_sweep_samples": 10,
    "sample_counts": (10, 100, 1000),
    "sample_sweep_noise": 0.01,
}


def run_admittance_sweep(config: dict | None = None) -> ExperimentResult:
    """Admittance estimation error versus noise level and sample count.

    Converter-free 3-node system; every point is the mean squared-Frobenius
    relative error over the configured number of Monte-Carlo runs. Within
    each run the sweep points share random draws (one nested sample set,
    one noise realization rescaled per level), which removes Monte-Carlo
    jitter from the comparison between points.
    """
    cfg = _resolve_config(config, ADMITTANCE_DEFAULTS, "admittance_sweep")
    hcfg = HarmonicConfig(int(cfg["max_order"]))
    net = three_node_network(hcfg)
    truth = assemble_harmonic_admittance(net)
    spec = three_node_voltage_spec()
    lines = list(net.lines)
    runs = int(cfg["runs"])
    noise_levels = [float(r) for r in cfg["noise_levels"]]
    sample_counts = sorted(int(t) for t in cfg["sample_counts"])

    def estimate_error(voltages, currents, relative_std, noise_v, noise_i) -> float:
        ref_v, ref_i = rms_magnitude(voltages), rms_magnitude(currents)
        batch = NetworkMeasurementBatch(
            currents + relative_std * ref_i * noise_i,
            voltages + relative_std * ref_v * noise_v,
            net.nodes,
            hcfg,
        )
        est = estimate_admittance(batch, lines)
        return relative_error(est.admittance.blocks, truth.blocks)

    def unit_noise(rng, shape):
        return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)

    t_fixed = int(cfg["noise_sweep_samples"])
    noise_errors = np.zeros((len(noise_levels), runs))
    for run in range(runs):
        rng = _run_rng(cfg["seed"], 0, run)
        voltages = sample_bus_voltages(spec, t_fixed, rng, hcfg)
        currents = truth.apply(voltages)
        noise_v, noise_i = unit_noise(rng, voltages.shape), unit_noise(rng, currents.shape)
        for i, rel in enumerate(noise_levels):
            noise_errors[i, run] = estimate_error(voltages, currents, rel, noise_v, noise_i)

    noise_table = ResultTable("noise_sweep", ["relative_std", "samples", "mean_error", "runs"])
    for i, rel in enumerate(noise_levels):
        noise_table.add(rel, t_fixed, float(np.mean(noise_errors[i])), runs)

    rel = float(cfg["sample_sweep_noise"])
    t_max = max(sample_counts)
    sample_errors = np.zeros((len(sample_counts), runs))
    for run in range(runs):
        rng = _run_rng(cfg["seed"], 1, run)
        voltages = sample_bus_voltages(spec, t_max, rng, hcfg)
        currents = truth.apply(voltages)
        noise_v, noise_i = unit_noise(rng, voltages.shape), unit_noise(rng, currents.shape)
        for j, count in enumerate(sample_counts):
            sample_errors[j, run] = estimate_error(
                voltages[:, :count], currents[:, :count], rel,
                noise_v[:, :count], noise_i[:, :count],
            )

    sample_table = ResultTable("sample_sweep", ["samples", "relative_std", "mean_error", "runs"])
    for j, count in enumerate(sample_counts):
        sample_table.add(count, rel, float(np.mean(sample_errors[j])), runs)

    return ExperimentResult(
        "admittance_sweep", cfg, {t.name: t for t in (noise_table, sample_table)}
    )


# ---------------------------------------------------------------------------
# batch coupling estimation sweep


FCM_BATCH_DEFAULTS = {
    "max_order": 50,
    "runs": 100,
    "seed": 2203,
    "noise_levels": (0.001, 0.01),
    "sample_counts": (),  # empty: q+1, 2q, 3q, 5q
    "converter_seed": 11,
    "dc_current": 0.005,
}


def run_fcm_batch_sweep(config: dict | None = None) -> ExperimentResult:
    """Batch coupling-estimation error versus window length and noise.

    Within each run the window lengths share one nested sample set and
    one noise realization (rescaled per level), so the error curves
    compare like against like.
    """
    cfg = _resolve_config(config, FCM_BATCH_DEFAULTS, "fcm_batch_sweep")
    hcfg = HarmonicConfig(int(cfg["max_order"]))
    p, q = hcfg.p, hcfg.q
    runs = int(cfg["runs"])
    sample_counts = sorted(int(t) for t in cfg["sample_counts"]) or [q + 1, 2 * q, 3 * q, 5 * q]
    noise_levels = [float(r) for r in cfg["noise_levels"]]
    truth = synth_converter_fcm(SyntheticConverterSpec.from_seed(int(cfg["converter_seed"])), hcfg)
    input_spec = ConverterInputSpec(dc_current=float(cfg["dc_current"]))
    t_max = max(sample_counts)

    errors = np.zeros((len(noise_levels), len(sample_counts), runs))
    for run in range(runs):
        rng = _run_rng(cfg["seed"], run)
        voltages = sample_converter_voltages(input_spec, t_max, rng, hcfg)
        currents = truth.matrix @ voltages
        ref_v = rms_magnitude(voltages[:p])
        ref_i = rms_magnitude(currents)
        noise_v = rng.standard_normal(voltages.shape)
        noise_i = rng.standard_normal(currents.shape)
        for i, rel in enumerate(noise_levels):
            noisy_v = voltages + rel * ref_v * noise_v
            noisy_i = currents + rel * ref_i * noise_i
            for j, count in enumerate(sample_counts):
                est = estimate_fcm_batch(
                    MeasurementBatch(noisy_i[:, :count], noisy_v[:, :count])
                )
                errors[i, j, run] = relative_error(est.fcm.matrix, truth.matrix)

    table = ResultTable("errors", ["relative_std", "samples", "mean_error", "runs"])
    for i, rel in enumerate(noise_levels):
        for j, count in enumerate(sample_counts):
            table.add(rel, int(count), float(np.mean(errors[i, j])), runs)

    return ExperimentResult("fcm_batch_sweep", cfg, {table.name: table})


# ---------------------------------------------------------------------------
# online coupling estimation


FCM_ONLINE_DEFAULTS = {
    "max_order": 50,
    "horizon": 10_000,
    "window_samples": 0,  # 0: twice the voltage dimension
    "noise": 0.001,
    "n_configs": 4,
    "seed": 3307,
    "converter_seed": 11,
    "checkpoint_interval": 100,
    "refresh_interval": 1000,
    "dc_current": 0.005,
}


def run_fcm_online(config: dict | None = None) -> ExperimentResult:
    """Time-varying coupling tracked by the sliding-window estimator.

    The true coupling switches between ``n_configs`` variants (identical
    internal parameters, freshly drawn switching patterns) at evenly
    spaced steps. Per-step errors are relative to the largest true
    coupling norm over the horizon; Gram-inverse drift against a fresh
    inversion is recorded at every checkpoint.
    """
    cfg = _resolve_config(config, FCM_ONLINE_DEFAULTS, "fcm_online")
    hcfg = HarmonicConfig(int(cfg["max_order"]))
    p, q = hcfg.p, hcfg.q
    horizon = int(cfg["horizon"])
    window = int(cfg["window_samples"]) or 2 * q
    n_configs = int(cfg["n_configs"])
    input_spec = ConverterInputSpec(dc_current=float(cfg["dc_current"]))

    truths = [
        synth_converter_fcm(
            SyntheticConverterSpec.from_seed(int(cfg["converter_seed"]) + i), hcfg
        )
        for i in range(n_configs)
    ]
    denominator = max(float(np.linalg.norm(t.matrix) ** 2) for t in truths)

    def config_index(step: int) -> int:
        return min(n_configs - 1, (step - 1) * n_configs // horizon)

    rng = _run_rng(cfg["seed"], 0)
    noise_rng = _run_rng(cfg["seed"], 1)
    rel = float(cfg["noise"])

    clean_init = sample_converter_voltages(input_spec, window, rng, hcfg)
    init_currents = truths[0].matrix @ clean_init
    ref_i = rms_magnitude(init_currents)
    ref_v = rms_magnitude(clean_init[:p])

    def noisy(data, reference):
        return data + noise_rng.normal(0.0, rel * reference, data.shape)

    estimator = OnlineFcmEstimator(
        MeasurementBatch(noisy(init_currents, ref_i), noisy(clean_init, ref_v)),
        refresh_interval=int(cfg["refresh_interval"]),
    )

    trajectory = ResultTable("trajectory", ["step", "config_index", "error"])
    checkpoints = ResultTable("checkpoints", ["step", "gram_deviation"])
    for step in range(1, horizon + 1):
        idx = config_index(step)
        v_clean = sample_converter_voltages(input_spec, 1, rng, hcfg)[:, 0]
        i_clean = truths[idx].matrix @ v_clean
        estimate = estimator.step(noisy(i_clean, ref_i), noisy(v_clean, ref_v))
        err = relative_error(estimate.matrix, truths[idx].matrix, denominator=denominator)
        trajectory.add(step, idx, float(err))
        if step % int(cfg["checkpoint_interval"]) == 0:
            _, voltages = estimator.window
            fresh = np.linalg.inv(voltages @ voltages.T)
            deviation = float(
                np.max(np.abs(estimator.gram_inverse - fresh)) / np.max(np.abs(fresh))
            )
            checkpoints.add(step, deviation)

    return ExperimentResult(
        "fcm_online", cfg, {t.name: t for t in (trajectory, checkpoints)}
    )


# ---------------------------------------------------------------------------
# reduction validation


REDUCTION_DEFAULTS = {
    "max_order": 50,
    "runs": 250,
    "seed": 4409,
    "window_samples": 0,  # 0: twice the voltage dimension
    "dc_std": 0.005,
    "resistance_std": 0.01,
    "reactance_std": 0.01,
    "voltage_std": 0.005,
    "converter_seed": 11,
}


def run_reduction_validation(config: dict | None = None) -> ExperimentResult:
    """Virtual coupling matrix versus the exact network equations.

    Each randomized test jitters the 3-node parameters, draws fresh
    switching patterns for the four converters, computes the root current
    exactly from the block network equations, and compares it against the
    reduced matrix applied directly and against a matrix estimated from
    noiseless root measurements.
    """
    cfg = _resolve_config(config, REDUCTION_DEFAULTS, "reduction_validation")
    hcfg = HarmonicConfig(int(cfg["max_order"]))
    p, q = hcfg.p, hcfg.q
    window = int(cfg["window_samples"]) or 2 * q
    input_spec = ConverterInputSpec()
    mean_voltage = input_spec.mean_vector(hcfg)
    base_spec = SyntheticConverterSpec.from_seed(int(cfg["converter_seed"]))

    per_test = ResultTable(
        "tests",
        ["run", "eps_reduction", "eps_estimated", "eps_comparison", "fcm_error"],
    )
    for run in range(int(cfg["runs"])):
        rng = _run_rng(cfg["seed"], run)
        fcms = [
            synth_converter_fcm(
                SyntheticConverterSpec.from_seed(
                    int(rng.integers(2 ** 62)),
                    resistance=base_spec.resistance,
                    reactance=base_spec.reactance,
                    link_gain=base_spec.link_gain,
                    link_time=base_spec.link_time,
                    injection_gain=base_spec.injection_gain,
                ),
                hcfg,
            )
            for _ in range(4)
        ]
        dc_currents = tuple(
            np.asarray(THREE_NODE_DC_CURRENTS) + rng.normal(0.0, float(cfg["dc_std"]), 4)
        )
        lines = jittered_three_node_lines(
            rng, float(cfg["resistance_std"]), float(cfg["reactance_std"])
        )
        net = three_node_network(hcfg, fcms, dc_currents, lines)

        # column 0 evaluates the metrics; the rest feed the estimator
        voltages = mean_voltage[:, None] + rng.normal(
            0.0, float(cfg["voltage_std"]), (p, window + 1)
        )
        exact = solve_harmonic_network(net, voltages).root_injection

        virtual = reduce_tree(net).fcm
        v_eval = np.concatenate([voltages[:, 0], [1.0]])
        i_exact = exact[:, 0]
        i_reduced = virtual.apply(v_eval)

        est_batch = MeasurementBatch(
            exact[:, 1:], np.vstack([voltages[:, 1:], np.ones(window)])
        )
        estimated = estimate_fcm_batch(est_batch).fcm
        i_estimated = estimated.apply(v_eval)

        norm_exact = float(np.linalg.norm(i_exact))
        per_test.add(
            run,
            float(np.linalg.norm(i_exact - i_reduced)) / norm_exact,
            float(np.linalg.norm(i_exact - i_estimated)) / norm_exact,
            float(np.linalg.norm(i_reduced - i_estimated)) / float(np.linalg.norm(i_estimated)),
            relative_error(estimated.matrix, virtual.matrix),
        )

    summary = ResultTable("summary", ["metric", "mean", "runs"])
    for metric in ("eps_reduction", "eps_estimated", "eps_comparison", "fcm_error"):
        summary.add(metric, float(np.mean(per_test.column(metric))), int(cfg["runs"]))

    return ExperimentResult(
        "reduction_validation", cfg, {t.name: t for t in (per_test, summary)}
    )


EXPERIMENTS = {
    "admittance_sweep": (run_admittance_sweep, ADMITTANCE_DEFAULTS),
    "fcm_batch_sweep": (run_fcm_batch_sweep, FCM_BATCH_DEFAULTS),
    "fcm_online": (run_fcm_online, FCM_ONLINE_DEFAULTS),
    "reduction_validation": (run_reduction_validation, REDUCTION_DEFAULTS),
}


def run_experiment(name: str, config: dict | None = None) -> ExperimentResult:
    """Dispatch one experiment by name with an optional config mapping."""
    try:
        runner, _ = EXPERIMENTS[name]
    except KeyError:
        raise ValidationError(
            f"unknown experiment {name!r}; choose from {sorted(EXPERIMENTS)}"
        ) from None
    return runner(config)
