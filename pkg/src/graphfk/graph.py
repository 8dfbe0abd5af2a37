"""Weighted graphs (X, b, m) and lazy neighbor providers.

A finite :class:`WeightedGraph` stores every undirected edge once, keyed by
``(u, v)`` with ``u < v``; both orientations are derived from that record, so
symmetry and the zero diagonal hold by construction.  Anything that only
needs local queries (the path sampler) talks to a :class:`GraphProvider`,
which may describe an infinite graph.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Hashable, Iterable, Mapping, Protocol, Sequence, runtime_checkable

import numpy as np

from .errors import DomainError, NumericError

Vertex = Hashable


@runtime_checkable
class GraphProvider(Protocol):
    """Local view of a weighted graph.

    Implementations must be deterministic and symmetric: ``y`` appears in
    ``neighbors(x)`` with weight ``w`` iff ``x`` appears in ``neighbors(y)``
    with the same weight.  All weights and measures are strictly positive.
    """

    def neighbors(self, x: Vertex) -> Sequence[tuple[Vertex, float]]: ...

    def measure(self, x: Vertex) -> float: ...


@dataclass(frozen=True)
class Violation:
    kind: str
    where: tuple
    detail: str = ""

    def __str__(self) -> str:
        loc = ",".join(str(w) for w in self.where)
        return f"{self.kind} at ({loc}): {self.detail}" if self.detail else f"{self.kind} at ({loc})"


class WeightedGraph:
    """Finite weighted graph on dense vertex ids ``0..n-1``.

    Parameters
    ----------
    measure : sequence of float
        Vertex measure ``m(x) > 0``; its length fixes the vertex count.
    edges : mapping ``(u, v) -> b`` or iterable of ``(u, v, b)``
        Each undirected edge exactly once, in either orientation.
    labels : sequence of str, optional
        External vertex names (as used in config files).  Defaults to
        ``"0", "1", ...``.

    Raises
    ------
    DomainError
        On any violated invariant, duplicate edge, or unknown endpoint.
    """

    __slots__ = ("_m", "_edges", "_adj", "_labels", "_index")

    def __init__(self, measure, edges=(), labels=None):
        m = np.array(measure, dtype=float).reshape(-1)
        n = m.size
        if isinstance(edges, Mapping):
            items = [(u, v, w) for (u, v), w in edges.items()]
        else:
            items = [tuple(e) for e in edges]
        canon: dict[tuple[int, int], float] = {}
        problems: list[Violation] = []
        for u, v, w in items:
            u, v, w = int(u), int(v), float(w)
            if not (0 <= u < n and 0 <= v < n):
                problems.append(Violation("unknown_vertex", (u, v)))
                continue
            if u == v:
                problems.append(Violation("diagonal", (u, v), f"b={w}"))
                continue
            if not (w > 0 and math.isfinite(w)):
                problems.append(Violation("nonpositive_weight", (u, v), f"b={w}"))
                continue
            key = (u, v) if u < v else (v, u)
            if key in canon:
                problems.append(Violation("duplicate_edge", key))
                continue
            canon[key] = w
        for x in range(n):
            if not (m[x] > 0):
                problems.append(Violation("nonpositive_measure", (x,), f"m={m[x]}"))
            elif not math.isfinite(m[x]):
                problems.append(Violation("nonfinite_measure", (x,), f"m={m[x]}"))
        if problems:
            raise DomainError("invalid graph: " + "; ".join(map(str, problems)))

        adj: list[list[tuple[int, float]]] = [[] for _ in range(n)]
        for (u, v), w in sorted(canon.items()):
            adj[u].append((v, w))
            adj[v].append((u, w))
        if labels is None:
            labels = [str(i) for i in range(n)]
        labels = tuple(str(s) for s in labels)
        if len(labels) != n or len(set(labels)) != n:
            raise DomainError("labels must be unique and one per vertex")

        m.setflags(write=False)
        self._m = m
        self._edges = dict(sorted(canon.items()))
        self._adj = tuple(tuple(a) for a in adj)
        self._labels = labels
        self._index = {s: i for i, s in enumerate(labels)}

    @property
    def n(self) -> int:
        return self._m.size

    @property
    def measure_array(self) -> np.ndarray:
        return self._m

    @property
    def labels(self) -> tuple[str, ...]:
        return self._labels

    def index_of(self, label: str) -> int:
        try:
            return self._index[str(label)]
        except KeyError:
            raise DomainError(f"unknown vertex label {label!r}") from None

    def vertices(self) -> range:
        return range(self.n)

    def edges(self) -> dict[tuple[int, int], float]:
        """Canonical edge records ``(u, v) -> b`` with ``u < v``."""
        return dict(self._edges)

    def weight(self, x: int, y: int) -> float:
        self._check(x)
        self._check(y)
        key = (x, y) if x < y else (y, x)
        return self._edges.get(key, 0.0)

    def neighbors(self, x: int) -> tuple[tuple[int, float], ...]:
        self._check(x)
        return self._adj[x]

    def measure(self, x: int) -> float:
        self._check(x)
        return float(self._m[x])

    def _check(self, x) -> None:
        if not (isinstance(x, (int, np.integer)) and 0 <= x < self.n):
            raise DomainError(f"unknown vertex {x!r}")

    def __repr__(self) -> str:
        return f"WeightedGraph(n={self.n}, edges={len(self._edges)})"


class FiniteGraphProvider:
    """:class:`GraphProvider` backed by a materialized :class:`WeightedGraph`."""

    def __init__(self, graph: WeightedGraph):
        self.graph = graph

    def neighbors(self, x):
        return self.graph.neighbors(x)

    def measure(self, x):
        return self.graph.measure(x)


class IntegerLatticeProvider:
    """The lattice Z^d with unit edge weights and constant measure.

    Vertices are integer tuples of length ``dim``.  Never materialized.
    """

    def __init__(self, dim: int = 1, weight: float = 1.0, mass: float = 1.0):
        if dim < 1 or weight <= 0 or mass <= 0:
            raise DomainError("dim >= 1, weight > 0 and mass > 0 required")
        self.dim, self.weight, self.mass = dim, float(weight), float(mass)

    def neighbors(self, x):
        x = tuple(x)
        if len(x) != self.dim:
            raise DomainError(f"vertex {x!r} is not in Z^{self.dim}")
        out = []
        for k in range(self.dim):
            for step in (-1, 1):
                y = list(x)
                y[k] += step
                out.append((tuple(y), self.weight))
        return out

    def measure(self, x):
        return self.mass


class GeometricChainProvider:
    """Half-line 0 - 1 - 2 - ... with ``b(k, k+1) = growth**k`` and unit measure.

    For ``growth > 1`` the walk drifts outward while its holding rates grow
    geometrically, so the jump process explodes in finite time almost surely;
    useful for exercising the explosion flag.
    """

    def __init__(self, growth: float = 2.0):
        if not growth > 0:
            raise DomainError("growth must be positive")
        self.growth = float(growth)

    def _check(self, x) -> int:
        k = int(x)
        if k < 0 or k != x:
            raise DomainError(f"unknown vertex {x!r}")
        return k

    def neighbors(self, x):
        k = self._check(x)
        up = (k + 1, self.growth**k)
        return [up] if k == 0 else [(k - 1, self.growth ** (k - 1)), up]

    def measure(self, x):
        self._check(x)
        return 1.0


def validate_graph(weights, measure=None) -> list[Violation]:
    """List every violated weighted-graph invariant.

    Accepts either a :class:`WeightedGraph` or raw data: ``weights`` a
    mapping of *ordered* pairs ``(x, y) -> b(x, y)`` (absent pairs mean 0)
    and ``measure`` a mapping ``x -> m(x)``.  Violations are returned, never
    raised; the list is empty iff the data describe a valid graph.
    """
    if isinstance(weights, WeightedGraph):
        g = weights
        weights = {}
        for (u, v), w in g.edges().items():
            weights[(u, v)] = w
            weights[(v, u)] = w
        measure = {x: g.measure(x) for x in g.vertices()}
    if measure is None:
        raise DomainError("raw graph data needs a measure mapping")

    out: list[Violation] = []
    for x, mx in measure.items():
        mx = float(mx)
        if not mx > 0:
            out.append(Violation("nonpositive_measure", (x,), f"m={mx}"))
        elif not math.isfinite(mx):
            out.append(Violation("nonfinite_measure", (x,), f"m={mx}"))
    seen: set[frozenset] = set()
    for (x, y), w in weights.items():
        w = float(w)
        for z in (x, y):
            if z not in measure:
                out.append(Violation("unknown_vertex", (z,), f"endpoint of edge ({x},{y})"))
        if x == y:
            if w != 0:
                out.append(Violation("diagonal", (x, y), f"b={w}"))
            continue
        if w < 0 or not math.isfinite(w):
            out.append(Violation("nonpositive_weight", (x, y), f"b={w}"))
        key = frozenset((x, y))
        if key in seen:
            continue
        seen.add(key)
        back = float(weights.get((y, x), 0.0))
        if back != w:
            out.append(Violation("asymmetric", (x, y), f"b({x},{y})={w} but b({y},{x})={back}"))
    return out


def vertex_degree(g, x) -> float:
    """Weighted degree sum_y b(x, y) for a graph or provider."""
    if isinstance(g, WeightedGraph):
        return float(sum(w for _, w in g.neighbors(x)))
    return float(math.fsum(w for _, w in g.neighbors(x)))


def jump_rate(g, x) -> float:
    """Holding rate deg(x) / m(x); raises :class:`NumericError` on overflow."""
    deg = vertex_degree(g, x)
    mx = g.measure(x)
    if not (mx > 0):
        raise DomainError(f"measure at {x!r} is not positive")
    rate = deg / mx
    if not math.isfinite(rate):
        raise NumericError(f"jump rate at {x!r} overflows (deg={deg}, m={mx})")
    return rate


def form_bound_constant(g: WeightedGraph) -> float:
    """C(b, m) = max_x deg(x) / m(x); ``math.inf`` if it overflows."""
    if g.n == 0:
        raise DomainError("empty graph")
    with np.errstate(over="ignore"):
        deg = np.zeros(g.n)
        for (u, v), w in g.edges().items():
            deg[u] += w
            deg[v] += w
        return float(np.max(deg / g.measure_array))


def graph_from_raw(vertices: Iterable[tuple[str, float]], edges: Iterable[tuple[str, str, float]]) -> WeightedGraph:
    """Build a graph from string-labelled vertex and edge records."""
    vertices = list(vertices)
    labels = [str(v) for v, _ in vertices]
    index = {s: i for i, s in enumerate(labels)}
    if len(index) != len(labels):
        raise DomainError("duplicate vertex ids")
    recs = []
    for u, v, w in edges:
        if str(u) not in index or str(v) not in index:
            raise DomainError(f"edge ({u},{v}) references an unknown vertex")
        recs.append((index[str(u)], index[str(v)], w))
    return WeightedGraph([m for _, m in vertices], recs, labels=labels)
