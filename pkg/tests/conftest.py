"""Shared generators for randomized tests."""

import numpy as np
import pytest

from gridharm.harmonics import Fcm, HarmonicConfig, LineImpedance
from gridharm.network import Converter, HarmonicNetwork


def random_spectrum(rng, max_order):
    """Conjugate-symmetric per-phase spectrum, shape (3, 2K+1)."""
    pos = rng.standard_normal((3, max_order + 1)) + 1j * rng.standard_normal((3, max_order + 1))
    pos[:, 0] = pos[:, 0].real
    return np.concatenate([pos[:, :0:-1].conj(), pos], axis=1)


def random_symmetric_operator(rng, max_order):
    """Complex operator compatible with conjugate-symmetric vectors."""
    n = 2 * max_order + 1
    full = rng.standard_normal((3 * n, 3 * n)) + 1j * rng.standard_normal((3 * n, 3 * n))
    for po in range(3):
        for pi in range(3):
            block = full[po * n:(po + 1) * n, pi * n:(pi + 1) * n]
            full[po * n:(po + 1) * n, pi * n:(pi + 1) * n] = 0.5 * (
                block + block[::-1, ::-1].conj()
            )
    return full


def random_fcm(rng, config, scale=0.3):
    """Generic coupling matrix, scaled small enough to keep propagation
    blocks well conditioned in tree tests."""
    p = config.p
    coupling = scale * rng.standard_normal((p, p)) / np.sqrt(p)
    dc_col = scale * rng.standard_normal(p) / np.sqrt(p)
    return Fcm.from_parts(coupling, dc_col)


def random_line(rng):
    return LineImpedance(
        tuple(0.04 + 0.05 * rng.random(3)), tuple(0.08 + 0.1 * rng.random(3))
    )


def random_tree_network(rng, config, max_nodes=8, max_depth=3):
    """Random tree with 1..2 converters per node."""
    n_nodes = int(rng.integers(2, max_nodes + 1))
    nodes = list(range(1, n_nodes + 1))
    depth = {1: 0}
    lines = {}
    for node in nodes[1:]:
        candidates = [m for m in nodes if m < node and depth[m] < max_depth]
        parent = int(rng.choice(candidates))
        depth[node] = depth[parent] + 1
        lines[(parent, node)] = random_line(rng)
    converters = {}
    for node in nodes:
        count = int(rng.integers(1, 3))
        converters[node] = [
            Converter(random_fcm(rng, config), float(rng.uniform(0.01, 0.1)))
            for _ in range(count)
        ]
    return HarmonicNetwork(config, tuple(nodes), 1, lines, converters)


@pytest.fixture
def small_config():
    return HarmonicConfig(2)
