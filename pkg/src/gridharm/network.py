"""Radial harmonic network model and the exact block network equations.

A network is a tree of buses joined by series line impedances, with any
number of converters (each a real coupling matrix plus a dc-side current)
attached to each bus. Given the root-bus voltage, the network state is
fully determined by one linear block system: a current-balance equation
per node, an Ohm equation per line, and a coupling equation per
converter. The solver assembles that system sparsely and solves it with a
direct factorization, so the resulting currents are exact up to rounding
and serve as the ground truth for every estimator in the package.

Sign conventions: line currents are oriented child -> parent and satisfy
``v_parent - v_child = Z @ i_line``; the root injection is the total
current the tree delivers at the root bus.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NumericalError, ValidationError
from .harmonics import Fcm, HarmonicConfig, LineImpedance

#: condition-number threshold past which a block counts as non-invertible
CONDITION_LIMIT = 1e12


@dataclass(frozen=True)
class Converter:
    """One converter attachment: coupling matrix plus dc-side current.

    A plain load is representable as a converter whose coupling block is
    the load admittance in real form and whose dc column is zero. For
    virtual converters produced by reduction, ``dc_current`` is 1.
    """

    fcm: Fcm
    dc_current: float = 1.0


@dataclass
class HarmonicNetwork:
    """Rooted tree of buses with per-line impedances and attached converters."""

    config: HarmonicConfig
    nodes: tuple
    root: object
    lines: dict  # (node, node) ordered as given -> LineImpedance
    converters: dict = field(default_factory=dict)  # node -> list[Converter]

    def __post_init__(self):
        nodes = tuple(self.nodes)
        if len(set(nodes)) != len(nodes):
            dupes = sorted({n for n in nodes if list(nodes).count(n) > 1}, key=str)
            raise ValidationError(f"duplicate node id(s): {dupes}")
        if self.root not in nodes:
            raise ValidationError(f"root {self.root!r} is not a node")
        seen = set()
        for (a, b), imp in self.lines.items():
            if a not in nodes or b not in nodes:
                raise ValidationError(f"line ({a!r}, {b!r}) references unknown node")
            if a == b:
                raise ValidationError(f"line ({a!r}, {b!r}) is a self-loop")
            key = frozenset((a, b))
            if key in seen:
                raise ValidationError(f"duplicate line between {a!r} and {b!r}")
            seen.add(key)
            if not isinstance(imp, LineImpedance):
                raise ValidationError(f"line ({a!r}, {b!r}) has no impedance")
        for node, convs in self.converters.items():
            if node not in nodes:
                raise ValidationError(f"converter attached to unknown node {node!r}")
            for conv in convs:
                if conv.fcm.matrix.shape != (self.config.p, self.config.q):
                    raise ValidationError(
                        f"converter at node {node!r} has shape {conv.fcm.matrix.shape}, "
                        f"expected {(self.config.p, self.config.q)}"
                    )
        self.nodes = nodes
        self._build_tree()

    def _build_tree(self):
        """BFS from the root; rejects cycles and disconnected nodes."""
        adjacency = {n: [] for n in self.nodes}
        for a, b in self.lines:
            adjacency[a].append(b)
            adjacency[b].append(a)
        if len(self.lines) != len(self.nodes) - 1:
            raise ValidationError(
                f"{len(self.lines)} lines for {len(self.nodes)} nodes: not a tree"
            )
        parent = {self.root: None}
        order = [self.root]
        queue = [self.root]
        while queue:
            n = queue.pop(0)
            for m in adjacency[n]:
                if m == parent[n]:
                    continue
                if m in parent:
                    raise ValidationError("network contains a cycle")
                parent[m] = n
                order.append(m)
                queue.append(m)
        if len(order) != len(self.nodes):
            missing = sorted(set(self.nodes) - set(order), key=str)
            raise ValidationError(f"nodes not reachable from root: {missing}")
        self._parent = parent
        self._bfs_order = order
        self._children = {n: [] for n in self.nodes}
        for n in order[1:]:
            self._children[parent[n]].append(n)

    # tree accessors -------------------------------------------------------

    def parent(self, node):
        return self._parent[node]

    def children(self, node) -> list:
        return list(self._children[node])

    def bfs_order(self) -> list:
        return list(self._bfs_order)

    def line_impedance(self, a, b) -> LineImpedance:
        try:
            return self.lines[(a, b)]
        except KeyError:
            return self.lines[(b, a)]

    def node_converters(self, node) -> list:
        return list(self.converters.get(node, ()))

    @property
    def n_converters(self) -> int:
        return sum(len(v) for v in self.converters.values())


def build_network(document: dict) -> HarmonicNetwork:
    """Construct a network from its document form.

    The document layout (also the on-disk JSON schema)::

        {
          "max_order": 50,
          "nodes": [1, 2, 3],
          "root": 1,
          "lines": [
            {"nodes": [1, 2],
             "resistance": {"a": 0.05, "b": 0.06, "c": 0.04},
             "reactance":  {"a": 0.1,  "b": 0.95, "c": 0.15}}
          ],
          "converters": [
            {"node": 1, "dc_current": 0.05, "fcm": <payload>}
          ]
        }

    An fcm payload is one of ``{"matrix": [[...]]}`` (inline rows),
    ``{"file": "relative/path"}`` (matrix file, resolved by the loader in
    :mod:`gridharm.fileio`), or ``{"synthetic": {...}}`` (a seeded
    synthetic converter description, see
    :class:`gridharm.scenarios.SyntheticConverterSpec`).
    """
    if not isinstance(document, dict):
        raise ValidationError("network document must be a mapping")
    for key in ("nodes", "root", "lines"):
        if key not in document:
            raise ValidationError(f"network document is missing {key!r}")
    config = HarmonicConfig(int(document.get("max_order", 50)))
    nodes = tuple(document["nodes"])

    lines = {}
    for entry in document["lines"]:
        try:
            a, b = entry["nodes"]
            r = _per_phase(entry["resistance"])
            x = _per_phase(entry["reactance"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed line entry {entry!r}: {exc}") from exc
        if (a, b) in lines or (b, a) in lines:
            raise ValidationError(f"duplicate line between {a!r} and {b!r}")
        lines[(a, b)] = LineImpedance(r, x)

    converters = {}
    for entry in document.get("converters", ()):
        try:
            node = entry["node"]
            dc = float(entry["dc_current"])
            payload = entry["fcm"]
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed converter entry {entry!r}: {exc}") from exc
        fcm = _resolve_fcm_payload(payload, config)
        converters.setdefault(node, []).append(Converter(fcm, dc))

    return HarmonicNetwork(config, nodes, document["root"], lines, converters)


def _per_phase(value) -> tuple:
    if isinstance(value, dict):
        return tuple(float(value[ph]) for ph in ("a", "b", "c"))
    seq = tuple(float(v) for v in value)
    if len(seq) != 3:
        raise ValueError(f"expected 3 phase values, got {len(seq)}")
    return seq


def _resolve_fcm_payload(payload, config: HarmonicConfig) -> Fcm:
    if isinstance(payload, dict) and "matrix" in payload:
        return Fcm(np.asarray(payload["matrix"], dtype=float))
    if isinstance(payload, dict) and "synthetic" in payload:
        from .scenarios import SyntheticConverterSpec, synth_converter_fcm

        spec = SyntheticConverterSpec.from_document(payload["synthetic"])
        return synth_converter_fcm(spec, config)
    if isinstance(payload, dict) and "file" in payload:
        from .fileio import read_fcm

        return read_fcm(payload["file"])
    raise ValidationError(f"unrecognized fcm payload: {payload!r}")


# ---------------------------------------------------------------------------
# harmonic admittance


@dataclass
class HarmonicAdmittance:
    """Block-diagonal bus admittance over harmonic orders and phases.

    ``blocks[k, ph]`` is the N x N complex bus-admittance matrix at
    harmonic order k and phase ``PHASES[ph]``. The dense u x u form
    (u = 3*N*(K+1)) is ordered order-major then phase then node:
    index = k*3N + ph*N + node_position. Cross-order and cross-phase
    couplings are structurally zero.
    """

    config: HarmonicConfig
    node_ids: tuple
    blocks: np.ndarray  # complex, shape (K+1, 3, N, N)

    def __post_init__(self):
        n = len(self.node_ids)
        expected = (self.config.n_orders, 3, n, n)
        if self.blocks.shape != expected:
            raise ValidationError(f"blocks shape {self.blocks.shape}, expected {expected}")

    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)

    @property
    def u(self) -> int:
        return 3 * self.n_nodes * self.config.n_orders

    def to_dense(self) -> np.ndarray:
        n = self.n_nodes
        out = np.zeros((self.u, self.u), dtype=complex)
        for k in range(self.config.n_orders):
            for ph in range(3):
                i = (k * 3 + ph) * n
                out[i:i + n, i:i + n] = self.blocks[k, ph]
        return out

    def apply(self, bus_voltages: np.ndarray) -> np.ndarray:
        """Bus injection currents ``Y @ v`` for a (u,) vector or (u, T) batch."""
        v = np.asarray(bus_voltages, dtype=complex)
        single = v.ndim == 1
        if single:
            v = v[:, None]
        if v.shape[0] != self.u:
            raise ValidationError(f"expected {self.u} rows, got {v.shape[0]}")
        n = self.n_nodes
        vb = v.reshape(self.config.n_orders, 3, n, -1)
        out = np.einsum("kpij,kpjt->kpit", self.blocks, vb).reshape(self.u, -1)
        return out[:, 0] if single else out


def assemble_harmonic_admittance(net: HarmonicNetwork) -> HarmonicAdmittance:
    """Bus-admittance blocks of a network's lines.

    Per order and phase this is the standard construction: the
    off-diagonal entry for a line is minus the branch admittance 1/z, and
    each diagonal entry accumulates the admittances of the lines incident
    to that node. Networks with no lines yield all-zero blocks.
    """
    n = len(net.nodes)
    pos = {node: i for i, node in enumerate(net.nodes)}
    blocks = np.zeros((net.config.n_orders, 3, n, n), dtype=complex)
    orders = np.arange(net.config.n_orders)
    for (a, b), imp in net.lines.items():
        z = np.asarray(imp.resistance)[:, None] + 1j * orders[None, :] * np.asarray(imp.reactance)[:, None]
        bad = np.abs(z) < 1e-300
        if np.any(bad):
            ph, k = np.argwhere(bad)[0]
            raise NumericalError(
                f"line ({a!r}, {b!r}) phase {'abc'[ph]} has zero impedance at order {k}"
            )
        y = 1.0 / z  # (3, K+1)
        ia, ib = pos[a], pos[b]
        for ph in range(3):
            blocks[:, ph, ia, ia] += y[ph]
            blocks[:, ph, ib, ib] += y[ph]
            blocks[:, ph, ia, ib] -= y[ph]
            blocks[:, ph, ib, ia] -= y[ph]
    return HarmonicAdmittance(net.config, net.nodes, blocks)


# ---------------------------------------------------------------------------
# exact network solve


@dataclass
class NetworkSolution:
    """All converter currents, line currents, and bus voltages of one solve.

    Arrays have shape (p,) for a single root-voltage vector or (p, T) for
    a batch of T vectors.
    """

    network: HarmonicNetwork
    voltages: dict  # node -> array, includes the root
    converter_currents: dict  # node -> list of arrays
    line_currents: dict  # (parent, child) -> array
    root_injection: np.ndarray

    def residuals(self) -> dict:
        """Worst relative residual of each equation family.

        Each equation is scaled by the magnitudes of its own terms, with
        the overall solution magnitude as a floor so that trivially
        satisfied equations (e.g. at a converter-free leaf) do not divide
        by zero.
        """
        net = self.network
        floor = max(
            (float(np.max(np.abs(a))) for a in self._all_arrays()), default=0.0
        )
        floor = max(floor, 1e-300)

        def rel(residual, *terms):
            scale = max((float(np.max(np.abs(t))) for t in terms), default=0.0)
            return float(np.max(np.abs(residual)) / max(scale, floor))

        kcl = 0.0
        for node in net.nodes:
            terms = list(self.converter_currents.get(node, []))
            terms += [self.line_currents[(node, ch)] for ch in net.children(node)]
            outgoing = (
                self.root_injection
                if node == net.root
                else self.line_currents[(net.parent(node), node)]
            )
            total = sum(terms) if terms else np.zeros_like(outgoing)
            kcl = max(kcl, rel(total - outgoing, *terms, outgoing))

        ohm = 0.0
        for (parent, child), current in self.line_currents.items():
            z = net.line_impedance(parent, child).real_matrix(net.config)
            lhs = z @ current + self.voltages[child]
            rhs = self.voltages[parent]
            ohm = max(ohm, rel(lhs - rhs, lhs, rhs))

        fcm = 0.0
        for node in net.nodes:
            for conv, current in zip(net.node_converters(node), self.converter_currents.get(node, [])):
                v = self.voltages[node]
                dc_part = conv.dc_current * conv.fcm.dc_column
                predicted = conv.fcm.coupling @ v + (
                    dc_part[:, None] if v.ndim == 2 else dc_part
                )
                fcm = max(fcm, rel(current - predicted, predicted, current))

        return {"kcl": kcl, "ohm": ohm, "fcm": fcm}

    def _all_arrays(self):
        yield self.root_injection
        yield from self.voltages.values()
        yield from self.line_currents.values()
        for currents in self.converter_currents.values():
            yield from currents

    def max_residual(self) -> float:
        return max(self.residuals().values())


def solve_harmonic_network(net: HarmonicNetwork, v_root: np.ndarray) -> NetworkSolution:
    """Solve the exact block network equations for given root voltage(s).

    Parameters
    ----------
    net : HarmonicNetwork
    v_root : array, shape (p,) or (p, T)
        Root-bus voltage in the canonical real layout; a 2-d input solves
        all T samples against one factorization.

    The unknowns are every converter current, every line current, every
    non-root bus voltage, and the root injection current; the equations
    are current balance at each node, Ohm's law on each line, and the
    coupling relation at each converter.
    """
    cfg = net.config
    p = cfg.p
    v_root = np.asarray(v_root, dtype=float)
    single = v_root.ndim == 1
    rhs_cols = 1 if single else v_root.shape[1]
    if v_root.shape[0] != p:
        raise ValidationError(f"v_root has {v_root.shape[0]} rows, expected p = {p}")
    vr = v_root.reshape(p, rhs_cols)

    converters = [
        (node, conv) for node in net.bfs_order() for conv in net.node_converters(node)
    ]
    tree_lines = [
        (net.parent(node), node) for node in net.bfs_order() if node != net.root
    ]
    nonroot = [node for node in net.bfs_order() if node != net.root]

    n_conv, n_line, n_free = len(converters), len(tree_lines), len(nonroot)
    n_blocks = n_conv + n_line + n_free + 1  # + root injection

    conv_var = {i: i for i in range(n_conv)}
    line_var = {line: n_conv + j for j, line in enumerate(tree_lines)}
    volt_var = {node: n_conv + n_line + j for j, node in enumerate(nonroot)}
    inj_var = n_blocks - 1

    _check_line_conditioning(net)

    eye = sp.identity(p, format="csr")
    grid = [[None] * n_blocks for _ in range(n_blocks)]
    rhs = np.zeros((n_blocks * p, rhs_cols))
    row = 0

    # coupling relation per converter
    for i, (node, conv) in enumerate(converters):
        grid[row][conv_var[i]] = eye
        if node == net.root:
            rhs[row * p:(row + 1) * p] = conv.fcm.coupling @ vr
        else:
            grid[row][volt_var[node]] = sp.csr_matrix(-conv.fcm.coupling)
        rhs[row * p:(row + 1) * p] += conv.dc_current * conv.fcm.dc_column[:, None]
        row += 1

    # Ohm's law per line: Z i + v_child - v_parent = 0
    for parent, child in tree_lines:
        z = net.line_impedance(parent, child).real_matrix(cfg)
        grid[row][line_var[(parent, child)]] = sp.csr_matrix(z)
        grid[row][volt_var[child]] = eye
        if parent == net.root:
            rhs[row * p:(row + 1) * p] = vr
        else:
            grid[row][volt_var[parent]] = -eye
        row += 1

    # current balance per node
    conv_at = {}
    for i, (node, _) in enumerate(converters):
        conv_at.setdefault(node, []).append(i)
    for node in net.bfs_order():
        for i in conv_at.get(node, ()):
            grid[row][conv_var[i]] = eye
        for ch in net.children(node):
            grid[row][line_var[(node, ch)]] = eye
        if node == net.root:
            grid[row][inj_var] = -eye
        else:
            grid[row][line_var[(net.parent(node), node)]] = -eye
        row += 1

    system = sp.bmat(grid, format="csc")
    try:
        factor = spla.splu(system)
    except RuntimeError as exc:
        raise NumericalError(f"network block system is singular: {exc}") from exc
    _check_system_conditioning(system, factor)
    solution = factor.solve(rhs)

    def take(block_index):
        arr = solution[block_index * p:(block_index + 1) * p]
        return arr[:, 0] if single else arr

    conv_currents = {}
    for i, (node, _) in enumerate(converters):
        conv_currents.setdefault(node, []).append(take(conv_var[i]))
    line_currents = {line: take(var) for line, var in line_var.items()}
    voltages = {node: take(var) for node, var in volt_var.items()}
    voltages[net.root] = v_root
    return NetworkSolution(
        network=net,
        voltages=voltages,
        converter_currents=conv_currents,
        line_currents=line_currents,
        root_injection=take(inj_var),
    )


def bus_arrays(solution: NetworkSolution) -> tuple[np.ndarray, np.ndarray]:
    """Complex bus voltages and injections of a solution, shape (u, T).

    Rows follow the dense admittance ordering (order-major, phase, node).
    The injection at each bus is the net current flowing into the line
    set there, so the pair satisfies ``i_bus = Y @ v_bus`` exactly for
    the network's assembled admittance.
    """
    net = solution.network
    cfg = net.config
    nodes = net.nodes
    n = len(nodes)
    single = solution.root_injection.ndim == 1
    t = 1 if single else solution.root_injection.shape[1]
    u = 3 * n * cfg.n_orders

    def to_complex(real_vec: np.ndarray) -> np.ndarray:
        arr = real_vec.reshape(3, cfg.phase_block, t)
        return arr[:, 0::2] + 1j * arr[:, 1::2]  # (3, K+1, t)

    voltages = np.empty((u, t), dtype=complex)
    injections = np.empty((u, t), dtype=complex)
    for pos, node in enumerate(nodes):
        v = to_complex(solution.voltages[node].reshape(cfg.p, t))
        total_conv = sum(
            (c.reshape(cfg.p, t) for c in solution.converter_currents.get(node, [])),
            start=np.zeros((cfg.p, t)),
        )
        if node == net.root:
            inj = solution.root_injection.reshape(cfg.p, t) - total_conv
        else:
            inj = -total_conv
        i = to_complex(inj)
        for ph in range(3):
            rows = np.arange(cfg.n_orders) * 3 * n + ph * n + pos
            voltages[rows] = v[ph]
            injections[rows] = i[ph]
    return voltages, injections


def _check_line_conditioning(net: HarmonicNetwork):
    """Per-line invertibility guard on Z @ (sum of child couplings) + I."""
    cfg = net.config
    for node in net.bfs_order():
        if node == net.root:
            continue
        convs = net.node_converters(node)
        if not convs:
            continue
        coupling = sum(c.fcm.coupling for c in convs)
        z = net.line_impedance(net.parent(node), node).real_matrix(cfg)
        m = z @ coupling + np.eye(cfg.p)
        cond = _cond1(m)
        if not np.isfinite(cond) or cond > CONDITION_LIMIT:
            raise NumericalError(
                f"propagation block of line ({net.parent(node)!r}, {node!r}) is "
                f"ill-conditioned (estimate {cond:.3g} > {CONDITION_LIMIT:g})"
            )


def _cond1(matrix: np.ndarray) -> float:
    try:
        inv = np.linalg.inv(matrix)
    except np.linalg.LinAlgError:
        return np.inf
    return float(np.linalg.norm(matrix, 1) * np.linalg.norm(inv, 1))


def _check_system_conditioning(system, factor):
    op = spla.LinearOperator(system.shape, matvec=factor.solve)
    try:
        inv_norm = spla.onenormest(op)
    except Exception:  # pragma: no cover - estimator failure counts as unknown
        return
    cond = float(spla.onenormest(system) * inv_norm)
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        raise NumericalError(
            f"network block system is ill-conditioned (estimate {cond:.3g} > {CONDITION_LIMIT:g})"
        )
