"""Collapse of radial subtrees into a single virtual coupling matrix.

Any subtree hanging off a root bus behaves, seen from that bus, like one
converter: the root current is an affine function of the root voltage,
and the affine part can be folded into the dc column by fixing the
virtual dc slot to the constant 1. The construction is exact. For a
depth-one star with leaf branches n (line impedance Z_n, leaf coupling
F_n with blocks (C_n | f_n), dc current d_n) and converters directly at
the root, the virtual matrix is

    coupling = sum_root C_r  +  sum_n C_n @ inv(Z_n @ C_n + I)
    dc col   = sum_root f_r * d_r
             + sum_n (f_n - C_n @ inv(Z_n @ C_n + I) @ Z_n @ f_n) * d_n

provided each propagation block M_n = Z_n @ C_n + I is invertible.
Deeper trees reduce by repeatedly merging parallel converters at leaves
and collapsing depth-one stars; the result is unique and independent of
the order in which leaves are processed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import NumericalError, ValidationError
from .harmonics import Fcm, HarmonicConfig
from .network import CONDITION_LIMIT, Converter, HarmonicNetwork


@dataclass(frozen=True)
class Branch:
    """One leaf branch of a depth-one star."""

    impedance: np.ndarray  # real p x p line impedance matrix
    fcm: Fcm
    dc_current: float = 1.0
    label: object = None


@dataclass
class ReductionReport:
    """Virtual coupling matrix plus diagnostics of how it was built."""

    fcm: Fcm
    condition_numbers: dict = field(default_factory=dict)  # branch label -> cond(M)
    trace: list = field(default_factory=list)

    @property
    def worst_condition(self) -> float:
        return max(self.condition_numbers.values(), default=1.0)


def merge_parallel_converters(converters) -> Fcm:
    """Single equivalent coupling matrix of converters sharing one bus.

    The coupling blocks add; the dc columns add weighted by each
    converter's dc current, so the merged matrix is driven by a constant
    1 in its dc slot.
    """
    converters = list(converters)
    if not converters:
        raise ValidationError("cannot merge an empty converter list")
    shape = converters[0].fcm.matrix.shape
    for conv in converters[1:]:
        if conv.fcm.matrix.shape != shape:
            raise ValidationError(
                f"mismatched coupling shapes: {conv.fcm.matrix.shape} vs {shape}"
            )
    coupling = sum(conv.fcm.coupling for conv in converters)
    dc_col = sum(conv.dc_current * conv.fcm.dc_column for conv in converters)
    return Fcm.from_parts(coupling, dc_col)


def reduce_depth_one(branches, root_converters=(), config: HarmonicConfig | None = None) -> ReductionReport:
    """Collapse a depth-one star into one virtual coupling matrix.

    Parameters
    ----------
    branches : iterable of Branch
        Leaf branches; each leaf must already carry a single coupling
        matrix (merge parallel leaf converters first).
    root_converters : iterable of Converter
        Converters attached directly to the root bus.
    config : HarmonicConfig, optional
        Required only when both inputs are empty.

    Each branch contributes through a linear solve against its
    propagation block M = Z @ C + I; explicit inverses are never formed.
    Branches whose block conditioning exceeds ``CONDITION_LIMIT`` raise
    :class:`NumericalError` naming the branch.
    """
    branches = list(branches)
    root_converters = list(root_converters)
    if config is None:
        if branches:
            config = branches[0].fcm.config
        elif root_converters:
            config = root_converters[0].fcm.config
        else:
            raise ValidationError("empty reduction requires an explicit config")
    p = config.p

    coupling = np.zeros((p, p))
    dc_col = np.zeros(p)
    if root_converters:
        merged = merge_parallel_converters(root_converters)
        coupling += merged.coupling
        dc_col += merged.dc_column

    conditions = {}
    trace = []
    for idx, branch in enumerate(branches):
        label = branch.label if branch.label is not None else idx
        z = np.asarray(branch.impedance, dtype=float)
        if z.shape != (p, p):
            raise ValidationError(f"branch {label!r}: impedance shape {z.shape}, expected {(p, p)}")
        c_leaf = branch.fcm.coupling
        m = z @ c_leaf + np.eye(p)
        cond = np.linalg.cond(m, 1)
        conditions[label] = float(cond)
        if not np.isfinite(cond) or cond > CONDITION_LIMIT:
            raise NumericalError(
                f"branch {label!r}: propagation block condition {cond:.3g} exceeds {CONDITION_LIMIT:g}"
            )
        lu = sla.lu_factor(m, check_finite=False)
        # C @ inv(M) realized as a transposed solve
        c_minv = sla.lu_solve(lu, c_leaf.T, trans=1, check_finite=False).T
        coupling += c_minv
        dc_col += branch.dc_current * (branch.fcm.dc_column - c_minv @ (z @ branch.fcm.dc_column))
        trace.append(f"collapse branch {label!r}")
    if root_converters:
        trace.insert(0, f"merge {len(root_converters)} root converter(s)")
    return ReductionReport(Fcm.from_parts(coupling, dc_col), conditions, trace)


def reduce_tree(net: HarmonicNetwork) -> ReductionReport:
    """Reduce an entire tree to the virtual coupling matrix at its root.

    Repeats three steps until only the root remains: merge multi-converter
    leaves into single virtual converters, collapse every depth-one star
    whose children are all leaves, and refresh the leaf set. Nodes without
    converters contribute nothing (their equivalent is the zero matrix).
    """
    cfg = net.config
    state: dict = {}
    for node in net.nodes:
        convs = net.node_converters(node)
        state[node] = list(convs)

    children = {node: net.children(node) for node in net.nodes}
    conditions = {}
    trace = []

    def as_single(node) -> Converter:
        """Step 1: one converter (or a merged virtual one) per leaf."""
        convs = state[node]
        if len(convs) == 1:
            return convs[0]
        if not convs:
            return Converter(Fcm.zero(cfg), 1.0)
        trace.append(f"merge node {node!r} ({len(convs)} converters)")
        return Converter(merge_parallel_converters(convs), 1.0)

    remaining = set(net.nodes)
    while len(remaining) > 1:
        collapsed_any = False
        for node in net.bfs_order():
            if node not in remaining or not children[node]:
                continue
            if any(children[child] for child in children[node]):
                continue  # not yet a depth-one star
            branches = []
            for child in children[node]:
                conv = as_single(child)
                z = net.line_impedance(node, child).real_matrix(cfg)
                branches.append(Branch(z, conv.fcm, conv.dc_current, label=(node, child)))
            partial = reduce_depth_one(branches, state[node], config=cfg)
            conditions.update(partial.condition_numbers)
            trace.append(
                f"collapse star at {node!r} (leaves {[child for child in children[node]]})"
            )
            state[node] = [Converter(partial.fcm, 1.0)]
            for child in children[node]:
                remaining.discard(child)
            children[node] = []
            collapsed_any = True
        if not collapsed_any:  # pragma: no cover - tree invariants make this unreachable
            raise NumericalError("tree reduction made no progress")

    root_conv = as_single(net.root)
    fcm = root_conv.fcm
    if root_conv.dc_current != 1.0:
        # fold a real dc current into the constant-1 convention
        fcm = Fcm.from_parts(fcm.coupling, root_conv.dc_current * fcm.dc_column)
    return ReductionReport(fcm, conditions, trace)
