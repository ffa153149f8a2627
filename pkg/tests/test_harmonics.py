"""Transforms, coupling-matrix algebra, impedances, and the error metric."""

import numpy as np
import pytest

from gridharm.errors import ValidationError
from gridharm.harmonics import (
    Fcm,
    HarmonicConfig,
    LineImpedance,
    apply_fcm,
    config_for_length,
    real_from_complex_matrix,
    real_from_spectrum,
    relative_error,
    spectrum_from_real,
)

from conftest import random_spectrum, random_symmetric_operator


def test_config_dimensions():
    cfg = HarmonicConfig(50)
    assert cfg.p == 306
    assert cfg.q == 307
    assert cfg.phase_block == 102
    assert HarmonicConfig().max_order == 50  # documented default


def test_config_rejects_negative_order():
    with pytest.raises(ValidationError):
        HarmonicConfig(-1)


def test_config_for_length():
    cfg = HarmonicConfig(7)
    assert config_for_length(cfg.p).max_order == 7
    assert config_for_length(cfg.q).max_order == 7
    with pytest.raises(ValidationError):
        config_for_length(5)


def test_vector_layout_phase_a_prefix():
    # K=1, only phase a populated: x^0 = 2, x^1 = 1 + 0.5j
    spec = np.zeros((3, 3), dtype=complex)
    spec[0, 1] = 2.0
    spec[0, 2] = 1 + 0.5j
    spec[0, 0] = np.conj(spec[0, 2])
    vec = real_from_spectrum(spec)
    assert np.allclose(vec[:4], [2.0, 0.0, 1.0, 0.5])
    assert np.all(vec[4:] == 0.0)


def test_zero_spectrum_maps_to_zero_vector():
    vec = real_from_spectrum(np.zeros((3, 11), dtype=complex))
    assert vec.shape == (HarmonicConfig(5).p,)
    assert np.all(vec == 0.0)


def test_round_trip_many_spectra():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(1000):
        spec = random_spectrum(rng, 6)
        back = spectrum_from_real(real_from_spectrum(spec))
        worst = max(worst, np.abs(back - spec).max())
    assert worst < 1e-13


def test_symmetry_violation_rejected():
    spec = np.zeros((3, 3), dtype=complex)
    spec[0, 2] = 1.0  # conjugate partner missing
    with pytest.raises(ValidationError):
        real_from_spectrum(spec)


def test_matrix_identity_transforms_to_identity():
    n = 3 * (2 * 2 + 1)
    real = real_from_complex_matrix(np.eye(n, dtype=complex))
    assert np.allclose(real, np.eye(HarmonicConfig(2).p))


def test_matrix_transform_of_impedance_diagonal_gives_rotation_blocks():
    cfg = HarmonicConfig(3)
    imp = LineImpedance((0.05, 0.06, 0.04), (0.1, 0.95, 0.15))
    from_transform = real_from_complex_matrix(np.diag(imp.complex_diagonal(cfg)))
    assert np.allclose(from_transform, imp.real_matrix(cfg))


def test_matrix_transform_action_equivalence():
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(200):
        K = int(rng.integers(1, 4))
        operator = random_symmetric_operator(rng, K)
        spec = random_spectrum(rng, K)
        real_op = real_from_complex_matrix(operator)
        acted = (operator @ spec.reshape(-1)).reshape(3, -1)
        lhs = real_from_spectrum(acted)
        rhs = real_op @ real_from_spectrum(spec)
        worst = max(worst, np.abs(lhs - rhs).max())
    assert worst < 1e-11


def test_matrix_transform_naturality_on_states():
    # the product of transforms acts like the transform of the product on
    # every conjugate-symmetric state
    rng = np.random.default_rng(13)
    for _ in range(20):
        a = random_symmetric_operator(rng, 2)
        b = random_symmetric_operator(rng, 2)
        product = real_from_complex_matrix(a) @ real_from_complex_matrix(b)
        composed = real_from_complex_matrix(a @ b)
        for _ in range(5):
            v = real_from_spectrum(random_spectrum(rng, 2))
            assert np.abs(composed @ v - product @ v).max() < 1e-10


def test_matrix_transform_naturality_for_order_local_operators():
    # full matrix equality additionally needs the right factor's order-0
    # input column to stay at order 0 (true for impedance-style diagonals);
    # the order-0 imaginary slot is nonphysical and composes freely otherwise
    rng = np.random.default_rng(15)
    K = 2
    n = 2 * K + 1
    for _ in range(20):
        a = random_symmetric_operator(rng, K)
        b = random_symmetric_operator(rng, K)
        for po in range(3):
            for pi in range(3):
                col = b[po * n:(po + 1) * n, pi * n + K]
                col[:K] = 0.0
                col[K + 1:] = 0.0
                if po != pi:
                    col[K] = 0.0
        lhs = real_from_complex_matrix(a @ b)
        rhs = real_from_complex_matrix(a) @ real_from_complex_matrix(b)
        assert np.abs(lhs - rhs).max() < 1e-10


def test_matrix_transform_rejects_incompatible_operator():
    bad = np.zeros((9, 9), dtype=complex)
    bad[0, 0] = 1.0  # pairs with (2, 2) under symmetry, left empty
    with pytest.raises(ValidationError):
        real_from_complex_matrix(bad)


def test_fcm_partition_and_apply(small_config):
    rng = np.random.default_rng(3)
    p, q = small_config.p, small_config.q
    matrix = rng.standard_normal((p, q))
    fcm = Fcm(matrix)
    assert np.shares_memory(fcm.coupling, fcm.matrix)
    assert np.allclose(np.column_stack([fcm.coupling, fcm.dc_column]), matrix)

    voltage = rng.standard_normal(q)
    assert np.allclose(fcm.apply(voltage), matrix @ voltage)
    # decomposition: coupling block on the harmonic part plus the dc column
    assert np.allclose(
        fcm.apply(voltage),
        fcm.coupling @ voltage[:-1] + voltage[-1] * fcm.dc_column,
    )


def test_apply_fcm_identity_coupling(small_config):
    p, q = small_config.p, small_config.q
    fcm = Fcm.from_parts(np.eye(p), np.zeros(p))
    voltage = np.arange(1.0, q + 1)
    assert np.allclose(apply_fcm(fcm, voltage), voltage[:-1])


def test_apply_fcm_dc_column_only(small_config):
    rng = np.random.default_rng(5)
    p = small_config.p
    dc_col = rng.standard_normal(p)
    fcm = Fcm.from_parts(np.zeros((p, p)), dc_col)
    voltage = np.concatenate([rng.standard_normal(p), [0.05]])
    assert np.allclose(apply_fcm(fcm, voltage), 0.05 * dc_col)


def test_apply_fcm_matches_naive_loop(small_config):
    rng = np.random.default_rng(9)
    p, q = small_config.p, small_config.q
    fcm = Fcm(rng.standard_normal((p, q)))
    voltage = rng.standard_normal(q)
    naive = np.zeros(p)
    for i in range(p):
        acc = 0.0
        for j in range(q):
            acc += fcm.matrix[i, j] * voltage[j]
        naive[i] = acc
    assert np.abs(fcm.apply(voltage) - naive).max() < 1e-14


def test_apply_fcm_dimension_mismatch(small_config):
    fcm = Fcm.zero(small_config)
    with pytest.raises(ValidationError):
        fcm.apply(np.zeros(small_config.q + 1))


def test_fcm_shape_validation():
    with pytest.raises(ValidationError):
        Fcm(np.zeros((6, 6)))  # must be p x (p+1)
    with pytest.raises(ValidationError):
        Fcm(np.zeros((5, 6)))  # p not a multiple of 6


def test_line_impedance_values_and_k0():
    cfg = HarmonicConfig(2)
    imp = LineImpedance((0.05, 0.06, 0.04), (0.1, 0.95, 0.15))
    assert imp.z(0)[0] == 0.05  # purely resistive at order 0
    assert imp.z(2)[0] == 0.05 + 0.2j
    real = imp.real_matrix(cfg)
    blk = cfg.phase_block
    for ph in range(3):
        k0 = real[ph * blk:ph * blk + 2, ph * blk:ph * blk + 2]
        assert np.allclose(k0, imp.resistance[ph] * np.eye(2))  # zero off-diagonals
    # order-2 block of phase a: [[r, -2x], [2x, r]]
    b2 = real[4:6, 4:6]
    assert np.allclose(b2, [[0.05, -0.2], [0.2, 0.05]])


def test_relative_error_cases():
    eye = np.eye(2)
    assert relative_error(eye, eye) == 0.0
    assert relative_error(np.zeros((2, 2)), eye) == 1.0
    assert np.isclose(relative_error(np.diag([1.0, 0.9]), eye), 0.01 / 2)


def test_relative_error_online_denominator():
    truth = np.eye(2)
    est = np.diag([1.0, 0.9])
    assert np.isclose(relative_error(est, truth, denominator=4.0), 0.01 / 4)
    with pytest.raises(ValidationError):
        relative_error(est, truth, denominator=0.0)


def test_relative_error_zero_iff_equal():
    rng = np.random.default_rng(21)
    a = rng.standard_normal((4, 5))
    assert relative_error(a, a) == 0.0
    assert relative_error(a + 1e-9, a) > 0.0
