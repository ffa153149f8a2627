"""Harmonic phasor bookkeeping and the complex/real transforms.

Voltages and currents are three-phase harmonic phasor vectors. In the
complex domain a signal is described by one phasor per harmonic order
k = -K..K and phase, with conjugate symmetry x^{-k} = conj(x^k) because
the underlying time-domain signal is real. All linear relations between
such signals (coupling matrices, line impedances) can equivalently be
written over a real-valued stacked vector, which is the representation
every solver and estimator in this package works with.

Real vector layout
------------------
Phase-major (a, b, c), harmonic order ascending 0..K within each phase,
real part before imaginary part within each order:

    (Re x^0(a), Im x^0(a), Re x^1(a), Im x^1(a), ..., Re x^K(c), Im x^K(c))

giving length p = 6*(K+1). Voltage vectors carry one extra trailing entry
for the converter dc-side current, giving length q = p + 1. The imaginary
part of the order-0 phasor is carried as a slot but is zero for any
conjugate-symmetric spectrum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

PHASES = ("a", "b", "c")

#: tolerance past which conjugate-symmetry violations reject the input
SYMMETRY_TOL = 1e-9


@dataclass(frozen=True)
class HarmonicConfig:
    """Maximum harmonic order and the dimensions derived from it.

    The default order of 50 matches the documented operating point of the
    package; PMUs sampling at 128 samples per cycle support orders of
    roughly this magnitude.
    """

    max_order: int = 50

    def __post_init__(self):
        if self.max_order < 0:
            raise ValidationError(f"max_order must be >= 0, got {self.max_order}")

    @property
    def n_orders(self) -> int:
        """Number of non-negative harmonic orders, K + 1."""
        return self.max_order + 1

    @property
    def spectrum_size(self) -> int:
        """Number of complex orders -K..K, i.e. 2K + 1."""
        return 2 * self.max_order + 1

    @property
    def phase_block(self) -> int:
        """Length of one phase's real block, 2*(K+1)."""
        return 2 * self.n_orders

    @property
    def p(self) -> int:
        """Length of a stacked real current/voltage vector, 6*(K+1)."""
        return 3 * self.phase_block

    @property
    def q(self) -> int:
        """Length of a voltage vector with the trailing dc slot, p + 1."""
        return self.p + 1

    def for_vector_length(self, n: int) -> bool:
        return n in (self.p, self.q)


def config_for_length(n: int) -> HarmonicConfig:
    """Recover the HarmonicConfig whose p or q equals ``n``."""
    for extra in (0, -1):
        m = n + extra
        if m % 6 == 0 and m > 0:
            cfg = HarmonicConfig(m // 6 - 1)
            if n in (cfg.p, cfg.q):
                return cfg
    raise ValidationError(f"no harmonic configuration has vector length {n}")


# ---------------------------------------------------------------------------
# conjugate-symmetry checks


def is_conjugate_symmetric(spectrum: np.ndarray, tol: float = SYMMETRY_TOL) -> bool:
    """True if x^{-k} = conj(x^k) holds within ``tol`` on the last axis."""
    spectrum = np.asarray(spectrum)
    flipped = spectrum[..., ::-1]
    return bool(np.max(np.abs(flipped - spectrum.conj()), initial=0.0) <= tol)


def require_conjugate_symmetric(spectrum: np.ndarray, tol: float = SYMMETRY_TOL, what: str = "spectrum"):
    if not is_conjugate_symmetric(spectrum, tol):
        raise ValidationError(f"{what} violates conjugate symmetry beyond {tol:g}")


# ---------------------------------------------------------------------------
# vector transforms


def real_from_spectrum(spectrum: np.ndarray, check: bool = True) -> np.ndarray:
    """Stack a per-phase complex spectrum into the canonical real vector.

    Parameters
    ----------
    spectrum : complex array, shape (3, 2K+1)
        Phasors for orders -K..K per phase; entry [i, K+k] is order k of
        phase ``PHASES[i]``.
    check : bool
        Reject input whose conjugate symmetry is broken beyond
        ``SYMMETRY_TOL``.

    Returns
    -------
    real array of length p = 6*(K+1)
    """
    spectrum = np.asarray(spectrum, dtype=complex)
    if spectrum.ndim != 2 or spectrum.shape[0] != 3 or spectrum.shape[1] % 2 != 1:
        raise ValidationError(f"expected shape (3, 2K+1), got {spectrum.shape}")
    if check:
        require_conjugate_symmetric(spectrum)
    K = (spectrum.shape[1] - 1) // 2
    pos = spectrum[:, K:]  # orders 0..K
    out = np.empty((3, 2 * (K + 1)))
    out[:, 0::2] = pos.real
    out[:, 1::2] = pos.imag
    return out.reshape(-1)


def spectrum_from_real(vector: np.ndarray) -> np.ndarray:
    """Inverse of :func:`real_from_spectrum`.

    Accepts a length-p vector (length-q input is rejected: strip the dc
    slot first). The negative orders are reconstructed by conjugation.
    """
    vector = np.asarray(vector, dtype=float)
    if vector.ndim != 1 or vector.size % 6 != 0:
        raise ValidationError(f"expected a length 6*(K+1) vector, got shape {vector.shape}")
    blocks = vector.reshape(3, -1)
    pos = blocks[:, 0::2] + 1j * blocks[:, 1::2]  # orders 0..K
    neg = pos[:, :0:-1].conj()  # orders -K..-1
    return np.concatenate([neg, pos], axis=1)


def split_voltage(vector: np.ndarray) -> tuple[np.ndarray, float]:
    """Split a length-q voltage vector into (length-p part, dc current)."""
    vector = np.asarray(vector, dtype=float)
    return vector[:-1], float(vector[-1])


# ---------------------------------------------------------------------------
# matrix transform


def _real_block_from_complex(block: np.ndarray) -> np.ndarray:
    """Real form of one (phase_out, phase_in) complex block.

    ``block[K+k, K+m]`` holds the coupling from input order m to output
    order k. Acting on a conjugate-symmetric input, orders m and -m
    contribute jointly; with S = A[k,m] + A[k,-m] and D = A[k,m] - A[k,-m]
    the 2x2 real block for m >= 1 is [[Re S, -Im D], [Im S, Re D]], and the
    m = 0 column uses the plain complex-multiplication block.
    """
    K = (block.shape[0] - 1) // 2
    pos = block[K:, K:]            # A[k, m],  k,m >= 0
    neg = block[K:, K::-1]         # A[k, -m], k,m >= 0
    s = pos + neg
    d = pos - neg
    s[:, 0] = pos[:, 0]
    d[:, 0] = pos[:, 0]
    out = np.empty((2 * (K + 1), 2 * (K + 1)))
    out[0::2, 0::2] = s.real
    out[0::2, 1::2] = -d.imag
    out[1::2, 0::2] = s.imag
    out[1::2, 1::2] = d.real
    return out


def real_from_complex_matrix(
    matrix: np.ndarray,
    dc_column: np.ndarray | None = None,
    check: bool = True,
):
    """Real form of a complex coupling operator.

    Parameters
    ----------
    matrix : complex array, shape (3*(2K+1), 3*(2K+1))
        Operator over stacked per-phase spectra (phase-major, orders
        -K..K within each phase). Must map conjugate-symmetric vectors to
        conjugate-symmetric vectors, i.e. every phase block must satisfy
        A[-k,-m] = conj(A[k,m]).
    dc_column : complex array, shape (3*(2K+1),), optional
        Conjugate-symmetric column describing the response to the real
        dc-side current. When given, the result is an :class:`Fcm` whose
        last column is the real form of this column.
    check : bool
        Verify the symmetry-compatibility conditions within
        ``SYMMETRY_TOL``.

    Returns
    -------
    (p, p) real array, or :class:`Fcm` when ``dc_column`` is given.

    The defining property, exercised by the test-suite oracle: for every
    conjugate-symmetric v,
    ``real_from_spectrum(matrix @ v) == result @ real_from_spectrum(v)``.
    """
    matrix = np.asarray(matrix, dtype=complex)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1] or matrix.shape[0] % 3 != 0:
        raise ValidationError(f"expected a square (3*(2K+1))^2 matrix, got {matrix.shape}")
    n = matrix.shape[0] // 3
    if n % 2 != 1:
        raise ValidationError("per-phase block size must be odd (orders -K..K)")
    K = (n - 1) // 2
    blk = 2 * (K + 1)
    out = np.empty((3 * blk, 3 * blk))
    for po in range(3):
        for pi in range(3):
            sub = matrix[po * n:(po + 1) * n, pi * n:(pi + 1) * n]
            if check and not is_conjugate_symmetric_matrix(sub):
                raise ValidationError(
                    f"phase block ({PHASES[po]},{PHASES[pi]}) is not symmetry-compatible"
                )
            out[po * blk:(po + 1) * blk, pi * blk:(pi + 1) * blk] = _real_block_from_complex(sub)
    if dc_column is None:
        return out
    dc_column = np.asarray(dc_column, dtype=complex).reshape(3, n)
    f = real_from_spectrum(dc_column, check=check)
    return Fcm(np.column_stack([out, f]))


def is_conjugate_symmetric_matrix(block: np.ndarray, tol: float = SYMMETRY_TOL) -> bool:
    """True if A[-k,-m] = conj(A[k,m]) within ``tol`` for one phase block."""
    block = np.asarray(block)
    return bool(np.max(np.abs(block[::-1, ::-1] - block.conj()), initial=0.0) <= tol)


# ---------------------------------------------------------------------------
# frequency coupling matrix


@dataclass(frozen=True, eq=False)
class Fcm:
    """Real-valued frequency coupling matrix.

    Maps a length-q voltage vector (harmonic voltages plus the dc-side
    current in the final slot) to the length-p harmonic current vector.
    The leading p x p block couples voltage harmonics to current
    harmonics; the final column is the response to the dc current. For
    virtual coupling matrices produced by network reduction, the dc slot
    of the input is the constant 1.
    """

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[1] != m.shape[0] + 1 or m.shape[0] % 6 != 0:
            raise ValidationError(f"coupling matrix must be p x (p+1) with p = 6*(K+1), got {m.shape}")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_parts(cls, coupling: np.ndarray, dc_column: np.ndarray) -> "Fcm":
        return cls(np.column_stack([coupling, dc_column]))

    @classmethod
    def zero(cls, config: HarmonicConfig) -> "Fcm":
        return cls(np.zeros((config.p, config.q)))

    @property
    def coupling(self) -> np.ndarray:
        """Leading p x p block (response to voltage harmonics)."""
        return self.matrix[:, :-1]

    @property
    def dc_column(self) -> np.ndarray:
        """Final column (response to the dc-side current)."""
        return self.matrix[:, -1]

    @property
    def config(self) -> HarmonicConfig:
        return HarmonicConfig(self.matrix.shape[0] // 6 - 1)

    def apply(self, voltage: np.ndarray) -> np.ndarray:
        """Current response ``F @ v`` for a length-q vector (or q x T batch)."""
        voltage = np.asarray(voltage, dtype=float)
        if voltage.shape[0] != self.matrix.shape[1]:
            raise ValidationError(
                f"voltage length {voltage.shape[0]} does not match q = {self.matrix.shape[1]}"
            )
        return self.matrix @ voltage


def apply_fcm(fcm: Fcm, voltage: np.ndarray) -> np.ndarray:
    """Functional form of :meth:`Fcm.apply`."""
    return fcm.apply(voltage)


# ---------------------------------------------------------------------------
# line impedance


@dataclass(frozen=True)
class LineImpedance:
    """Per-phase series impedance of one line.

    The impedance at harmonic order k is r + j*k*x per phase, where x is
    the reactance at the fundamental; the order-0 impedance is exactly the
    resistance.
    """

    resistance: tuple[float, float, float]
    reactance: tuple[float, float, float]

    def __post_init__(self):
        r = tuple(float(v) for v in np.asarray(self.resistance, dtype=float).reshape(3))
        x = tuple(float(v) for v in np.asarray(self.reactance, dtype=float).reshape(3))
        object.__setattr__(self, "resistance", r)
        object.__setattr__(self, "reactance", x)

    def z(self, order: int) -> np.ndarray:
        """Complex impedance per phase at one harmonic order (may be negative)."""
        return np.asarray(self.resistance) + 1j * order * np.asarray(self.reactance)

    def complex_diagonal(self, config: HarmonicConfig) -> np.ndarray:
        """Diagonal of the per-phase impedance operator over orders -K..K,
        stacked phase-major; shape (3*(2K+1),)."""
        orders = np.arange(-config.max_order, config.max_order + 1)
        r = np.asarray(self.resistance)[:, None]
        x = np.asarray(self.reactance)[:, None]
        return (r + 1j * orders[None, :] * x).reshape(-1)

    def real_matrix(self, config: HarmonicConfig) -> np.ndarray:
        """Real p x p form: block-diagonal with one 2x2 rotation-scaling
        block [[r, -k x], [k x, r]] per (phase, order)."""
        blk = config.phase_block
        out = np.zeros((config.p, config.p))
        orders = np.arange(config.n_orders)
        for i in range(3):
            r, x = self.resistance[i], self.reactance[i]
            base = i * blk
            idx_re = base + 2 * orders
            idx_im = idx_re + 1
            out[idx_re, idx_re] = r
            out[idx_im, idx_im] = r
            out[idx_re, idx_im] = -orders * x
            out[idx_im, idx_re] = orders * x
        return out


# ---------------------------------------------------------------------------
# error metrics


def relative_error(estimate: np.ndarray, truth: np.ndarray, denominator: float | None = None) -> float:
    """Squared-Frobenius relative estimation error.

    Default mode returns ``||truth - estimate||_F^2 / ||truth||_F^2``.
    Passing ``denominator`` switches to the online metric, which divides
    by an externally fixed value (the largest squared norm of the true
    matrix over the horizon) instead of the instantaneous one.
    """
    estimate = np.asarray(estimate)
    truth = np.asarray(truth)
    if estimate.shape != truth.shape:
        raise ValidationError(f"shape mismatch: {estimate.shape} vs {truth.shape}")
    num = float(np.linalg.norm(truth - estimate) ** 2)
    den = float(np.linalg.norm(truth) ** 2) if denominator is None else float(denominator)
    if den == 0.0:
        raise ValidationError("relative error denominator is zero")
    return num / den
