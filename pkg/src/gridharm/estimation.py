"""Least-squares estimators for coupling matrices and line admittances.

Three estimators share this module:

* batch coupling-matrix estimation from paired current/voltage samples,
  via the closed form ``F = I V^T (V V^T)^{-1}`` with a pseudo-inverse
  fallback when the voltage rows are linearly dependent;
* harmonic line-admittance estimation from bus-level phasor measurements,
  solved block-by-block per (order, phase) with the symmetry and
  topology-sparsity constraints built into the regression, plus a literal
  vectorized formulation kept as a small-scale cross-check;
* a sliding-window online variant of the coupling estimator that keeps
  the inverse Gram matrix current with two rank-one corrections per step
  instead of refactorizing.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import NumericalError, ValidationError
from .harmonics import Fcm, HarmonicConfig
from .network import HarmonicAdmittance

#: below this reciprocal-condition estimate the Gram matrix counts as
#: rank deficient and the solver falls back to the pseudo-inverse
GRAM_RCOND_LIMIT = 1e-13

#: downdate denominators smaller than this force a full refactorization
DOWNDATE_TOL = 1e-12


@dataclass
class MeasurementBatch:
    """Paired current (p x T) and voltage (q x T) samples, time-aligned."""

    currents: np.ndarray
    voltages: np.ndarray
    timestamps: np.ndarray | None = None

    def __post_init__(self):
        self.currents = np.asarray(self.currents, dtype=float)
        self.voltages = np.asarray(self.voltages, dtype=float)
        if self.currents.ndim != 2 or self.voltages.ndim != 2:
            raise ValidationError("measurement matrices must be 2-d")
        if self.currents.shape[1] != self.voltages.shape[1]:
            raise ValidationError(
                f"sample counts differ: {self.currents.shape[1]} currents vs "
                f"{self.voltages.shape[1]} voltages"
            )
        if self.voltages.shape[0] != self.currents.shape[0] + 1:
            raise ValidationError(
                f"voltage rows ({self.voltages.shape[0]}) must be current rows "
                f"({self.currents.shape[0]}) + 1"
            )
        if self.timestamps is not None:
            self.timestamps = np.asarray(self.timestamps)
            if self.timestamps.shape != (self.currents.shape[1],):
                raise ValidationError("timestamps must have one entry per sample")

    @property
    def n_samples(self) -> int:
        return self.currents.shape[1]

    @property
    def config(self) -> HarmonicConfig:
        return HarmonicConfig(self.currents.shape[0] // 6 - 1)


@dataclass
class FcmEstimate:
    """Estimated coupling matrix plus regression diagnostics."""

    fcm: Fcm
    rank: int
    rank_deficient: bool


def estimate_fcm_batch(batch: MeasurementBatch) -> FcmEstimate:
    """Least-squares coupling matrix from one measurement batch.

    Minimizes ``||I - F V||_F`` over all p x q matrices. With linearly
    independent voltage rows the minimizer is the closed form
    ``I V^T (V V^T)^{-1}``; a rank-deficient window switches to the
    pseudo-inverse and flags the result.
    """
    matrix, rank, deficient = _fcm_least_squares(batch.currents, batch.voltages)
    return FcmEstimate(Fcm(matrix), rank, deficient)


def _fcm_least_squares(currents: np.ndarray, voltages: np.ndarray):
    q = voltages.shape[0]
    gram = voltages @ voltages.T
    cross = currents @ voltages.T
    try:
        chol = sla.cho_factor(gram, check_finite=False)
        rcond = _spd_rcond(chol[0], gram)
        if rcond > GRAM_RCOND_LIMIT:
            return sla.cho_solve(chol, cross.T, check_finite=False).T, q, False
    except np.linalg.LinAlgError:
        pass
    rank = int(np.linalg.matrix_rank(gram, hermitian=True))
    return cross @ np.linalg.pinv(gram, hermitian=True), rank, True


def _spd_rcond(chol_factor: np.ndarray, gram: np.ndarray) -> float:
    anorm = float(np.linalg.norm(gram, 1))
    rcond, info = sla.lapack.dpocon(chol_factor, anorm)
    if info != 0:  # pragma: no cover - dpocon only fails on bad arguments
        return 0.0
    return float(rcond)


# ---------------------------------------------------------------------------
# harmonic admittance estimation


@dataclass
class NetworkMeasurementBatch:
    """Bus-level complex phasor measurements for all nodes and orders.

    Rows follow the dense admittance ordering (order-major, then phase,
    then node); both matrices are u x T with u = 3*N*(K+1).
    """

    currents: np.ndarray
    voltages: np.ndarray
    node_ids: tuple
    config: HarmonicConfig

    def __post_init__(self):
        self.currents = np.asarray(self.currents, dtype=complex)
        self.voltages = np.asarray(self.voltages, dtype=complex)
        u = 3 * len(self.node_ids) * self.config.n_orders
        for name, arr in (("currents", self.currents), ("voltages", self.voltages)):
            if arr.ndim != 2 or arr.shape[0] != u:
                raise ValidationError(f"{name} must be {u} x T, got {arr.shape}")
        if self.currents.shape[1] != self.voltages.shape[1]:
            raise ValidationError("bus current/voltage sample counts differ")

    @property
    def n_samples(self) -> int:
        return self.currents.shape[1]


@dataclass
class AdmittanceEstimate:
    admittance: HarmonicAdmittance
    rank_deficient: bool


def estimate_admittance(batch: NetworkMeasurementBatch, lines) -> AdmittanceEstimate:
    """Symmetric, topology-sparse admittance minimizing the residual.

    The Frobenius objective decouples over (order, phase) blocks, so each
    block is solved as an independent complex regression whose unknowns
    are the N diagonal entries plus one entry per line; symmetry and the
    hard zeros off the line set hold by construction. Rank-deficient
    blocks fall back to the minimum-norm solution and set the flag.
    """
    pos = {node: i for i, node in enumerate(batch.node_ids)}
    n = len(batch.node_ids)
    line_idx = []
    seen = set()
    for a, b in lines:
        if a not in pos or b not in pos:
            raise ValidationError(f"line ({a!r}, {b!r}) references unknown node")
        key = frozenset((a, b))
        if key in seen:
            raise ValidationError(f"duplicate line between {a!r} and {b!r}")
        seen.add(key)
        line_idx.append((pos[a], pos[b]))
    n_lines = len(line_idx)
    n_par = n + n_lines
    t = batch.n_samples

    blocks = np.zeros((batch.config.n_orders, 3, n, n), dtype=complex)
    deficient = False
    for k in range(batch.config.n_orders):
        for ph in range(3):
            base = (k * 3 + ph) * n
            v = batch.voltages[base:base + n]
            i = batch.currents[base:base + n]
            design = np.zeros((t, n, n_par), dtype=complex)
            design[:, np.arange(n), np.arange(n)] = v.T
            for j, (a, b) in enumerate(line_idx):
                design[:, a, n + j] = v[b]
                design[:, b, n + j] = v[a]
            theta, _, rank, _ = np.linalg.lstsq(
                design.reshape(t * n, n_par), i.T.reshape(-1), rcond=None
            )
            if rank < n_par:
                deficient = True
            block = np.zeros((n, n), dtype=complex)
            block[np.arange(n), np.arange(n)] = theta[:n]
            for j, (a, b) in enumerate(line_idx):
                block[a, b] = theta[n + j]
                block[b, a] = theta[n + j]
            blocks[k, ph] = block
    if deficient:
        warnings.warn("admittance regression is rank deficient; minimum-norm solution returned")
    return AdmittanceEstimate(
        HarmonicAdmittance(batch.config, tuple(batch.node_ids), blocks), deficient
    )


#: largest dense dimension u for which the vectorized reference runs
REFERENCE_MAX_U = 60


def estimate_admittance_reference(batch: NetworkMeasurementBatch, lines) -> HarmonicAdmittance:
    """Literal vectorized formulation of the admittance regression.

    Materializes the duplication matrix mapping the lower-triangular
    entries to the full symmetric matrix, and the selection matrix that
    drops structurally-zero entries, then solves
    ``min_y || vec(I) - (V^T kron Id) Q T y ||`` in one dense least
    squares. Only usable at small dimensions; the block solver above is
    the production path and must agree with this one.
    """
    n = len(batch.node_ids)
    u = 3 * n * batch.config.n_orders
    if u > REFERENCE_MAX_U:
        raise ValidationError(
            f"reference formulation is limited to u <= {REFERENCE_MAX_U}, got u = {u}"
        )
    pos = {node: i for i, node in enumerate(batch.node_ids)}
    line_pairs = {frozenset((pos[a], pos[b])) for a, b in lines}

    def tril_index(i: int, j: int) -> int:
        # position of (i, j), i >= j, in the column-stacked lower triangle
        return j * u - j * (j - 1) // 2 + (i - j)

    n_tril = u * (u + 1) // 2
    dup = np.zeros((u * u, n_tril))
    for j in range(u):
        for i in range(u):
            dup[j * u + i, tril_index(max(i, j), min(i, j))] = 1.0

    # free parameters: per (order, phase) block the diagonal entries, then
    # one entry per line of the topology
    sel_cols = []
    for k in range(batch.config.n_orders):
        for ph in range(3):
            base = (k * 3 + ph) * n
            for d in range(n):
                sel_cols.append(tril_index(base + d, base + d))
            for a, b in lines:
                ia, ib = pos[a] + base, pos[b] + base
                sel_cols.append(tril_index(max(ia, ib), min(ia, ib)))
    sel = np.zeros((n_tril, len(sel_cols)))
    for col, row in enumerate(sel_cols):
        sel[row, col] = 1.0

    design = np.kron(batch.voltages.T, np.eye(u)) @ dup @ sel
    target = batch.currents.reshape(-1, order="F")
    y, _, _, _ = np.linalg.lstsq(design, target, rcond=None)
    dense = (dup @ (sel @ y)).reshape((u, u), order="F")

    blocks = np.zeros((batch.config.n_orders, 3, n, n), dtype=complex)
    for k in range(batch.config.n_orders):
        for ph in range(3):
            base = (k * 3 + ph) * n
            blocks[k, ph] = dense[base:base + n, base:base + n]
    # enforce the structural zeros exactly (lstsq returns them as zeros
    # already; this guards against roundoff in the dense reshape)
    for k in range(batch.config.n_orders):
        for ph in range(3):
            for i in range(n):
                for j in range(n):
                    if i != j and frozenset((i, j)) not in line_pairs:
                        blocks[k, ph, i, j] = 0.0
    return HarmonicAdmittance(batch.config, tuple(batch.node_ids), blocks)


# ---------------------------------------------------------------------------
# online estimation


class OnlineFcmEstimator:
    """Sliding-window coupling estimator with rank-one Gram updates.

    Holds the T most recent (current, voltage) samples, the inverse Gram
    matrix of the voltage window, and the current estimate. Each step
    factors the oldest sample out of the inverse and the new sample in,
    both by rank-one corrections, so the expensive inversion happens only
    at initialization and at periodic refreshes that bound floating-point
    drift.

    Single-owner mutable: one caller steps it; the ``estimate`` and
    ``window`` properties hand out copies that are safe to share.
    """

    def __init__(self, batch: MeasurementBatch, refresh_interval: int = 1000):
        q = batch.voltages.shape[0]
        if batch.n_samples < q:
            raise ValidationError(
                f"initialization window needs at least q = {q} samples, got {batch.n_samples}"
            )
        if refresh_interval < 1:
            raise ValidationError("refresh_interval must be positive")
        self._currents = np.array(batch.currents, dtype=float)
        self._voltages = np.array(batch.voltages, dtype=float)
        if np.linalg.matrix_rank(self._voltages) < q:
            raise NumericalError("initialization voltage window is rank deficient")
        self._gram_inverse = np.linalg.inv(self._voltages @ self._voltages.T)
        self.refresh_interval = int(refresh_interval)
        self.steps_since_refresh = 0
        self._refresh_estimate()

    # read-only views ------------------------------------------------------

    @property
    def window_size(self) -> int:
        return self._voltages.shape[1]

    @property
    def window(self) -> tuple[np.ndarray, np.ndarray]:
        return self._currents.copy(), self._voltages.copy()

    @property
    def gram_inverse(self) -> np.ndarray:
        return self._gram_inverse.copy()

    @property
    def estimate(self) -> Fcm:
        return Fcm(self._estimate_matrix.copy())

    # stepping -------------------------------------------------------------

    def step(self, current: np.ndarray, voltage: np.ndarray) -> Fcm:
        """Slide the window by one sample and return the new estimate."""
        current = np.asarray(current, dtype=float).reshape(-1)
        voltage = np.asarray(voltage, dtype=float).reshape(-1)
        if current.shape[0] != self._currents.shape[0] or voltage.shape[0] != self._voltages.shape[0]:
            raise ValidationError("sample dimensions do not match the window")

        vc = self._gram_inverse
        oldest = self._voltages[:, 0]
        w = vc @ oldest
        denom_out = 1.0 - oldest @ w
        if abs(denom_out) < DOWNDATE_TOL:
            # downdate would blow up; slide and refactorize instead
            self._slide(current, voltage)
            self._gram_inverse = np.linalg.inv(self._voltages @ self._voltages.T)
            self.steps_since_refresh = 0
            self._refresh_estimate()
            return self.estimate

        vc = vc + np.outer(w, w) / denom_out
        w_new = vc @ voltage
        denom_in = 1.0 + voltage @ w_new
        vc = vc - np.outer(w_new, w_new) / denom_in

        self._slide(current, voltage)
        self.steps_since_refresh += 1
        if self.steps_since_refresh >= self.refresh_interval:
            vc = np.linalg.inv(self._voltages @ self._voltages.T)
            self.steps_since_refresh = 0
        self._gram_inverse = vc
        self._refresh_estimate()
        return self.estimate

    def _slide(self, current: np.ndarray, voltage: np.ndarray):
        self._currents = np.concatenate([self._currents[:, 1:], current[:, None]], axis=1)
        self._voltages = np.concatenate([self._voltages[:, 1:], voltage[:, None]], axis=1)

    def _refresh_estimate(self):
        self._estimate_matrix = (self._currents @ self._voltages.T) @ self._gram_inverse
