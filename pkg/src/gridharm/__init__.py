"""Harmonic coupling in radial converter networks: simulation of the
exact network equations, reduction of subtrees to virtual coupling
matrices, and least-squares estimation of coupling matrices and harmonic
line admittances from noisy measurements."""

from .errors import GridharmError, NumericalError, ValidationError
from .harmonics import (
    Fcm,
    HarmonicConfig,
    LineImpedance,
    apply_fcm,
    real_from_complex_matrix,
    real_from_spectrum,
    relative_error,
    spectrum_from_real,
)
from .network import (
    Converter,
    HarmonicAdmittance,
    HarmonicNetwork,
    NetworkSolution,
    assemble_harmonic_admittance,
    build_network,
    bus_arrays,
    solve_harmonic_network,
)
from .reduction import Branch, ReductionReport, merge_parallel_converters, reduce_depth_one, reduce_tree
from .estimation import (
    AdmittanceEstimate,
    FcmEstimate,
    MeasurementBatch,
    NetworkMeasurementBatch,
    OnlineFcmEstimator,
    estimate_admittance,
    estimate_admittance_reference,
    estimate_fcm_batch,
)
from .scenarios import (
    ConverterInputSpec,
    NoiseModel,
    SyntheticConverterSpec,
    VoltageSamplingSpec,
    add_measurement_noise,
    sample_bus_voltages,
    sample_converter_voltages,
    synth_converter_fcm,
    three_node_network,
)
from .experiments import EXPERIMENTS, ExperimentResult, ResultTable, run_experiment

__version__ = "0.1.0"
