"""Small reference problem instances used by the tests, the acceptance suite and the CLI."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import unitary_group

from .bundle import Connection, GaugeTransform, Potential
from .graph import WeightedGraph


@dataclass(frozen=True)
class Instance:
    graph: WeightedGraph
    connection: Connection
    potential: Potential | None
    hbar: float = 1.0

    @property
    def rank(self) -> int:
        return self.connection.rank


def two_vertex(b: float = 1.0, m=(1.0, 1.0), theta: float = 0.0, v=None) -> Instance:
    """Single edge 0 - 1; optional phase ``exp(i theta)`` on Phi(0, 1) and scalar potential."""
    g = WeightedGraph(list(m), [(0, 1, b)])
    phi = Connection(1, {(0, 1): [[np.exp(1j * theta)]]}, g)
    V = Potential.from_array(np.asarray(v, dtype=float)) if v is not None else None
    return Instance(g, phi, V)


def flux_triangle(theta: float, b: float = 1.0) -> Instance:
    """Triangle 0 -> 1 -> 2 -> 0 with equal phases whose product is ``exp(i theta)``."""
    g = WeightedGraph([1.0, 1.0, 1.0], [(0, 1, b), (1, 2, b), (0, 2, b)])
    z = np.exp(1j * theta / 3)
    phi = Connection(1, {(0, 1): [[z]], (1, 2): [[z]], (2, 0): [[z]]}, g)
    return Instance(g, phi, None)


def random_hermitian(nu: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    a = rng.normal(size=(nu, nu)) + 1j * rng.normal(size=(nu, nu))
    return scale * 0.5 * (a + a.conj().T)


def random_unitary(nu: int, rng: np.random.Generator) -> np.ndarray:
    if nu == 1:
        return np.array([[np.exp(2j * np.pi * rng.random())]])
    return unitary_group.rvs(nu, random_state=rng)


def random_instance(n: int = 6, nu: int = 2, seed: int = 20240611, extra_edges: int = 3,
                    potential: str = "mixed") -> Instance:
    """Connected random instance: a ring plus random chords, random m, unitary Phi.

    ``potential`` is ``"mixed"`` (indefinite Hermitian V), ``"positive"``
    (V >= 0), or ``"none"``.
    """
    rng = np.random.default_rng(seed)
    edges = {}
    for x in range(n):
        y = (x + 1) % n
        if x != y:
            edges[tuple(sorted((x, y)))] = float(rng.uniform(0.5, 1.5))
    pairs = [(x, y) for x in range(n) for y in range(x + 1, n) if (x, y) not in edges]
    for k in rng.permutation(len(pairs))[:extra_edges]:
        edges[pairs[k]] = float(rng.uniform(0.5, 1.5))
    m = rng.uniform(0.5, 2.0, size=n)
    g = WeightedGraph(m, edges)
    phi = Connection(nu, {e: random_unitary(nu, rng) for e in sorted(edges)}, g)
    if potential == "none":
        V = None
    elif potential == "positive":
        mats = {}
        for x in range(n):
            a = random_hermitian(nu, rng)
            mats[x] = a @ a.conj().T * 0.5
        V = Potential(nu, mats)
    elif potential == "mixed":
        V = Potential(nu, {x: random_hermitian(nu, rng) for x in range(n)})
    else:
        raise ValueError(f"unknown potential kind {potential!r}")
    return Instance(g, phi, V)


def edgeless_instance(n: int = 6, nu: int = 2, seed: int = 20240611) -> Instance:
    """Same vertex data and potential as :func:`random_instance`, no edges."""
    base = random_instance(n, nu, seed)
    g = WeightedGraph(base.graph.measure_array, [])
    return Instance(g, Connection.trivial(nu, g), base.potential)


def random_gauge(n: int, nu: int, seed: int) -> GaugeTransform:
    rng = np.random.default_rng(seed)
    return GaugeTransform(nu, {x: random_unitary(nu, rng) for x in range(n)})
