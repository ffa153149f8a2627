"""Synthetic data generation: voltages, noise, and converter couplings.

Ground-truth coupling matrices come from a seeded switching-function
model: a square-wave switching signal (uniformly drawn switching times,
fair-coin levels) modulates the bus voltage onto a dc link with a
first-order response, and the result is modulated back through a series
R-L input filter. The Fourier coefficients of the switching signal
produce cross-order coupling that decays with order distance, the dc
link couples the three phases, and a constant-on signal degenerates to a
pure passthrough. The complex operator is transformed to its real form
and scaled to unit coupling norm.

Voltage samples are Gaussian around per-order means: the fundamental
mean is fixed per phase (and node, for bus-level sampling) and decays
geometrically with the order; order 0 keeps only the real part. Bus
sampling also decays the standard deviation per order; converter-input
sampling uses a flat per-component deviation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .harmonics import Fcm, HarmonicConfig, LineImpedance, real_from_complex_matrix, real_from_spectrum
from .network import Converter, HarmonicNetwork


@dataclass(frozen=True)
class NoiseModel:
    """Relative measurement-noise level plus the seed that realizes it."""

    relative_std: float
    seed: int = 0

    def __post_init__(self):
        if self.relative_std < 0:
            raise ValidationError("relative_std must be nonnegative")


def rms_magnitude(data: np.ndarray) -> float:
    """Root-mean-square entry magnitude; the noise reference of a signal."""
    data = np.asarray(data)
    if data.size == 0:
        return 0.0
    return float(np.sqrt(np.mean(np.abs(data) ** 2)))


def add_measurement_noise(data: np.ndarray, model: NoiseModel, reference: float) -> np.ndarray:
    """Add i.i.d. zero-mean Gaussian noise to every real component.

    The standard deviation is ``model.relative_std * reference``; complex
    input receives independent noise on the real and imaginary parts.
    Deterministic for a fixed seed.
    """
    data = np.asarray(data)
    std = model.relative_std * reference
    if std == 0.0:
        return data.copy()
    rng = np.random.default_rng(model.seed)
    if np.iscomplexobj(data):
        return data + rng.normal(0.0, std, data.shape) + 1j * rng.normal(0.0, std, data.shape)
    return data + rng.normal(0.0, std, data.shape)


# ---------------------------------------------------------------------------
# voltage sampling


@dataclass(frozen=True)
class VoltageSamplingSpec:
    """Bus-voltage distribution for network-wide sampling.

    ``fundamental_means[n, ph]`` is the complex mean at order 1 for node n
    and phase ph. The order-k mean is that value divided by
    ``decay_base**k`` (only its real part at k = 0), and the per-component
    standard deviation at order k is ``base_std / decay_base**k``.
    """

    fundamental_means: np.ndarray  # complex, shape (N, 3)
    decay_base: float = 1.1
    base_std: float = 0.005

    def __post_init__(self):
        means = np.asarray(self.fundamental_means, dtype=complex)
        if means.ndim != 2 or means.shape[1] != 3:
            raise ValidationError(f"fundamental_means must be (N, 3), got {means.shape}")
        object.__setattr__(self, "fundamental_means", means)

    @property
    def n_nodes(self) -> int:
        return self.fundamental_means.shape[0]

    def order_means(self, config: HarmonicConfig) -> np.ndarray:
        """Complex means, shape (K+1, 3, N): order-major like the bus layout."""
        k = np.arange(config.n_orders)
        scale = 1.0 / self.decay_base ** k
        means = scale[:, None, None] * self.fundamental_means[None, :, :]  # (K+1, N, 3)
        means[0] = means[0].real  # order 0 keeps only the real part
        return means.transpose(0, 2, 1)


def sample_bus_voltages(spec: VoltageSamplingSpec, n_samples: int, rng, config: HarmonicConfig) -> np.ndarray:
    """Complex bus-voltage samples, shape (u, T) in the dense bus layout.

    Every real and imaginary component is an independent Gaussian around
    the decayed mean (the order-0 means are real-valued).
    """
    if n_samples < 1:
        raise ValidationError("n_samples must be >= 1")
    n = spec.n_nodes
    u = 3 * n * config.n_orders
    means = spec.order_means(config).reshape(u)
    k_of_row = np.repeat(np.arange(config.n_orders), 3 * n)
    std = spec.base_std / spec.decay_base ** k_of_row
    re = rng.normal(means.real[:, None], std[:, None], (u, n_samples))
    im = rng.normal(means.imag[:, None], std[:, None], (u, n_samples))
    return re + 1j * im


@dataclass(frozen=True)
class ConverterInputSpec:
    """Voltage seen by a single converter, in the real q-layout.

    The per-phase fundamental means decay geometrically with order like
    the bus spec, but the per-component deviation is flat across orders.
    The dc-slot value is the converter's dc-side current. The default
    means keep the mean-to-deviation ratio small enough that the noisy
    estimation experiments sit in their documented error regime.
    """

    fundamental_means: tuple = (0.040 + 0.020j, 0.032 + 0.016j, 0.024 + 0.012j)
    decay_base: float = 1.1
    std: float = 0.005
    dc_current: float = 0.005

    def mean_vector(self, config: HarmonicConfig) -> np.ndarray:
        """Mean in the real p-layout (without the dc slot)."""
        k = np.arange(-config.max_order, config.max_order + 1)
        decay = 1.0 / self.decay_base ** np.abs(k)
        means = np.asarray(self.fundamental_means, dtype=complex)[:, None] * decay[None, :]
        neg = k < 0
        means[:, neg] = means[:, neg].conj()
        means[:, k == 0] = means[:, k == 0].real
        return real_from_spectrum(means, check=False)


def sample_converter_voltages(
    spec: ConverterInputSpec, n_samples: int, rng, config: HarmonicConfig
) -> np.ndarray:
    """Clean voltage samples in the real q-layout, shape (q, T).

    Gaussian with deviation ``spec.std`` on every harmonic slot around
    the decayed mean; the final row is the constant dc current.
    """
    if n_samples < 1:
        raise ValidationError("n_samples must be >= 1")
    mean = spec.mean_vector(config)
    samples = rng.normal(mean[:, None], spec.std, (config.p, n_samples))
    dc = np.full((1, n_samples), spec.dc_current)
    return np.concatenate([samples, dc], axis=0)


# ---------------------------------------------------------------------------
# synthetic converter couplings


@dataclass(frozen=True)
class SyntheticConverterSpec:
    """Seedable description of one synthetic converter.

    ``switching_times`` (sorted, in [0, 2pi)) and ``switching_levels``
    (0/1 per segment) define the square-wave switching signal; the level
    of segment j applies from times[j] to times[j+1] (wrapping). The
    remaining fields are the per-phase series filter, the dc-link
    response, and the scale of the dc-current injection.
    """

    switching_times: tuple
    switching_levels: tuple
    resistance: tuple = (0.1, 0.11, 0.09)
    reactance: tuple = (0.4, 0.38, 0.42)
    link_gain: float = 0.25
    link_time: float = 0.4
    injection_gain: float = 1.0

    def __post_init__(self):
        times = np.asarray(self.switching_times, dtype=float)
        levels = np.asarray(self.switching_levels, dtype=float)
        if times.ndim != 1 or times.size == 0 or times.size != levels.size:
            raise ValidationError("switching times and levels must be equal-length, nonempty")
        if np.any(times < 0) or np.any(times >= 2 * np.pi):
            raise ValidationError("switching times must lie in [0, 2*pi)")
        if np.any(np.diff(times) < 0):
            raise ValidationError("switching times must be sorted")
        object.__setattr__(self, "switching_times", tuple(float(t) for t in times))
        object.__setattr__(self, "switching_levels", tuple(float(v) for v in levels))
        object.__setattr__(self, "resistance", tuple(float(v) for v in self.resistance))
        object.__setattr__(self, "reactance", tuple(float(v) for v in self.reactance))

    @classmethod
    def from_seed(cls, seed: int, n_switchings: int = 8, **params) -> "SyntheticConverterSpec":
        """Sample switching times uniformly on [0, 2pi) and levels as fair coins."""
        rng = np.random.default_rng(seed)
        times = np.sort(rng.uniform(0.0, 2 * np.pi, n_switchings))
        levels = rng.integers(0, 2, n_switchings)
        return cls(tuple(times), tuple(levels), **params)

    @classmethod
    def from_document(cls, doc: dict) -> "SyntheticConverterSpec":
        doc = dict(doc)
        if "seed" in doc:
            seed = int(doc.pop("seed"))
            n_switchings = int(doc.pop("switchings", 8))
            return cls.from_seed(seed, n_switchings, **doc)
        try:
            times = doc.pop("times")
            levels = doc.pop("levels")
        except KeyError as exc:
            raise ValidationError(f"synthetic converter document missing {exc}") from exc
        return cls(tuple(times), tuple(levels), **doc)


def switching_fourier_coefficients(times, levels, max_index: int) -> np.ndarray:
    """Fourier coefficients c_d of the switching square wave, d = -D..D.

    c_d = (1/2pi) * integral of s(t) exp(-j d t); computed in closed form
    from the segment boundaries, with c_{-d} = conj(c_d) exactly.
    """
    times = np.asarray(times, dtype=float)
    levels = np.asarray(levels, dtype=float)
    starts = times
    ends = np.concatenate([times[1:], [times[0] + 2 * np.pi]])
    d = np.arange(1, max_index + 1)
    phase_end = np.exp(-1j * np.outer(d, ends))
    phase_start = np.exp(-1j * np.outer(d, starts))
    pos = (phase_end - phase_start) @ levels / (-1j * d * 2 * np.pi)
    c0 = float(levels @ (ends - starts)) / (2 * np.pi)
    return np.concatenate([pos[::-1].conj(), [c0], pos])


def synth_converter_fcm(spec: SyntheticConverterSpec, config: HarmonicConfig) -> Fcm:
    """Deterministic dense coupling matrix from a converter description.

    Builds the complex operator order by order: a diagonal input-filter
    draw plus the modulate / dc-link / demodulate path whose coupling
    between input order m and output order k is
    ``g_k * sum_d c_{k-d} h_d c_{d-m}``. The three phases share the dc
    link (their switching signals are shifted copies), which produces the
    cross-phase blocks. The dc-current column injects the switching
    spectrum directly. The real form is scaled to unit coupling norm.
    """
    K = config.max_order
    n = config.spectrum_size
    coeffs = switching_fourier_coefficients(
        spec.switching_times, spec.switching_levels, 3 * K if K > 0 else 1
    )
    c_center = len(coeffs) // 2

    def c_shift(offset_idx: np.ndarray, phase_angle: float) -> np.ndarray:
        return coeffs[offset_idx + c_center] * np.exp(-1j * offset_idx * phase_angle)

    orders = np.arange(-K, K + 1)
    link_orders = np.arange(-2 * K, 2 * K + 1) if K > 0 else np.arange(-1, 2)
    link = spec.link_gain / (1.0 + 1j * link_orders * spec.link_time)
    angles = (0.0, 2 * np.pi / 3, 4 * np.pi / 3)

    g = [
        1.0 / (spec.resistance[ph] + 1j * orders * spec.reactance[ph])
        for ph in range(3)
    ]
    demod = [
        c_shift(orders[:, None] - link_orders[None, :], angles[ph]) for ph in range(3)
    ]
    mod = [
        c_shift(link_orders[:, None] - orders[None, :], angles[ph]) for ph in range(3)
    ]

    full = np.empty((3 * n, 3 * n), dtype=complex)
    for po in range(3):
        path = (g[po][:, None] * demod[po]) * link[None, :]
        for pi in range(3):
            block = path @ mod[pi]
            if po == pi:
                block[np.arange(n), np.arange(n)] -= g[po]
            full[po * n:(po + 1) * n, pi * n:(pi + 1) * n] = block

    dc_col = np.concatenate(
        [spec.injection_gain * c_shift(orders, angles[ph]) for ph in range(3)]
    )
    fcm = real_from_complex_matrix(full, dc_col, check=False)
    scale = 1.0 / np.linalg.norm(fcm.coupling)
    return Fcm(fcm.matrix * scale)


# ---------------------------------------------------------------------------
# the 3-node example system


#: dc-side currents of the four converters (A)
THREE_NODE_DC_CURRENTS = (0.05, 0.025, 0.075, 0.06)

#: per-phase line resistances and fundamental reactances (ohm)
THREE_NODE_LINES = {
    (1, 2): {"resistance": (0.05, 0.06, 0.04), "reactance": (0.1, 0.95, 0.15)},
    (1, 3): {"resistance": (0.075, 0.08, 0.07), "reactance": (0.15, 0.145, 0.155)},
}

#: complex bus-voltage means at the fundamental, per node and phase
THREE_NODE_VOLTAGE_MEANS = (
    (1.25 + 0.625j, 1.0 + 0.5j, 0.75 + 0.375j),
    (2.5 + 0.125j, 2.0 + 0.1j, 1.5 + 0.075j),
    (0.625 + 1.25j, 0.5 + 1.0j, 0.375 + 0.75j),
)


def three_node_voltage_spec(base_std: float = 0.005) -> VoltageSamplingSpec:
    return VoltageSamplingSpec(np.asarray(THREE_NODE_VOLTAGE_MEANS), base_std=base_std)


def three_node_network(
    config: HarmonicConfig,
    fcms=None,
    dc_currents=THREE_NODE_DC_CURRENTS,
    line_params=None,
) -> HarmonicNetwork:
    """The 3-node example: two converters at the root, one behind each line.

    ``fcms`` gives the four coupling matrices (converters 1 and 4 sit at
    node 1, converter 2 at node 2, converter 3 at node 3); omitting it
    builds a converter-free network, which is the admittance-estimation
    setting.
    """
    if line_params is None:
        line_params = {
            pair: LineImpedance(entry["resistance"], entry["reactance"])
            for pair, entry in THREE_NODE_LINES.items()
        }
    converters = {}
    if fcms is not None:
        if len(fcms) != 4 or len(dc_currents) != 4:
            raise ValidationError("the 3-node example takes exactly 4 converters")
        converters = {
            1: [Converter(fcms[0], dc_currents[0]), Converter(fcms[3], dc_currents[3])],
            2: [Converter(fcms[1], dc_currents[1])],
            3: [Converter(fcms[2], dc_currents[2])],
        }
    return HarmonicNetwork(config, (1, 2, 3), 1, dict(line_params), converters)


def jittered_three_node_lines(rng, resistance_std: float = 0.01, reactance_std: float = 0.01) -> dict:
    """Line parameters with Gaussian perturbations, one draw per phase value."""
    out = {}
    for pair, entry in THREE_NODE_LINES.items():
        r = np.asarray(entry["resistance"]) + rng.normal(0.0, resistance_std, 3)
        x = np.asarray(entry["reactance"]) + rng.normal(0.0, reactance_std, 3)
        out[pair] = LineImpedance(tuple(r), tuple(x))
    return out
