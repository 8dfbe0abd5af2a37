"""Kato functional, Golden-Thompson checks and the semiclassical trace sweep."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .bundle import Connection, Potential
from .errors import DomainError, NumericError
from .graph import WeightedGraph
from .operator import assemble, semigroup_trace

GT_TOL = 1e-8
DEFAULT_HBAR_GRID = tuple(np.geomspace(1.0, 1e-3, 13).tolist())


def _integrated_decay(lam: np.ndarray, t: float) -> np.ndarray:
    """``int_0^t exp(-s lam) ds`` elementwise, stable near lam = 0."""
    z = t * lam
    out = np.empty_like(lam)
    small = np.abs(z) < 1e-8
    out[~small] = -np.expm1(-z[~small]) / lam[~small]
    zs = z[small]
    out[small] = t * (1.0 - zs / 2.0 + zs * zs / 6.0)
    return out


def kato_functional(g: WeightedGraph, w, t: float) -> float:
    """``max_x int_0^t sum_y exp(-sH)(x, y) |w(y)| m(y) ds`` for the scalar graph operator.

    ``w`` is a mapping ``x -> value`` (missing vertices are 0) or an array of
    length ``n``.  The time integral is done in closed form over the spectrum.
    """
    if not t > 0:
        raise DomainError("t must be positive")
    if isinstance(w, Mapping):
        wa = np.zeros(g.n, dtype=complex)
        for x, v in w.items():
            wa[x] = v
    else:
        wa = np.asarray(w, dtype=complex).reshape(-1)
        if wa.size != g.n:
            raise DomainError("w must have one value per vertex")
    H = assemble(g, Connection.trivial(1, g))
    Q = H.eigenvectors
    d = H.sqrt_m
    # integral of exp(-sM) = D^{-1} Q diag(...) Q^* D, applied to |w|
    vec = Q.conj().T @ (d * np.abs(wa))
    vals = (Q @ (_integrated_decay(H.eigenvalues, t) * vec)) / d
    return float(np.max(vals.real))


def classical_partition_function(V: Potential | None, beta: float, vertices=None, rank: int | None = None) -> float:
    """``sum_x tr exp(-beta V(x))`` over ``vertices`` (an int n or an iterable).

    Vertices without a stored V(x) contribute ``rank``.  With ``vertices``
    omitted only the stored entries of ``V`` are summed.
    """
    if not beta > 0:
        raise DomainError("beta must be positive")
    if V is None:
        if vertices is None or rank is None:
            raise DomainError("zero potential needs vertices and rank")
        nverts = vertices if isinstance(vertices, int) else len(list(vertices))
        return float(nverts * rank)
    if vertices is None:
        verts = [x for x, _ in V.items()]
    elif isinstance(vertices, int):
        verts = range(vertices)
    else:
        verts = list(vertices)
    total = 0.0
    for x in verts:
        mu = np.linalg.eigvalsh(V(x))
        total += float(np.sum(np.exp(-beta * mu)))
    return total


@dataclass(frozen=True)
class SweepRow:
    hbar: float
    quantum_trace: float
    classical_trace: float

    @property
    def gap(self) -> float:
        return self.classical_trace - self.quantum_trace

    @property
    def holds(self) -> bool:
        return self.gap >= -GT_TOL


def quantum_trace(g: WeightedGraph, phi: Connection, V: Potential | None, beta: float, hbar: float) -> float:
    """``tr exp(-beta hbar H_{Phi, V/hbar})``."""
    H = assemble(g, phi, V, hbar)
    return semigroup_trace(H, beta * hbar)


def golden_thompson_check(g: WeightedGraph, phi: Connection, V: Potential | None, beta: float, hbar: float):
    """Return ``(quantum_trace, classical_bound, holds)`` with tolerance 1e-8."""
    if not (beta > 0 and hbar > 0):
        raise DomainError("beta and hbar must be positive")
    q = quantum_trace(g, phi, V, beta, hbar)
    c = classical_partition_function(V, beta, g.n, phi.rank)
    return q, c, bool(q <= c + GT_TOL)


def semiclassical_sweep(g: WeightedGraph, phi: Connection, V: Potential | None, beta: float,
                        hbar_grid: Iterable[float] = DEFAULT_HBAR_GRID) -> list[SweepRow]:
    """Quantum vs classical traces along a strictly decreasing hbar grid.

    Raises :class:`NumericError` if any row breaks the Golden-Thompson bound.
    """
    grid = [float(h) for h in hbar_grid]
    if not grid:
        raise DomainError("empty hbar grid")
    if any(h <= 0 for h in grid):
        raise DomainError("hbar values must be positive")
    if any(b >= a for a, b in zip(grid, grid[1:])):
        raise DomainError("hbar grid must be strictly decreasing")
    if not beta > 0:
        raise DomainError("beta must be positive")
    classical = classical_partition_function(V, beta, g.n, phi.rank)
    rows = [SweepRow(h, quantum_trace(g, phi, V, beta, h), classical) for h in grid]
    bad = [r for r in rows if not r.holds]
    if bad:
        raise NumericError(f"Golden-Thompson bound violated at hbar={bad[0].hbar} (gap {bad[0].gap})")
    return rows


def write_sweep_csv(path, rows: Iterable[SweepRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["hbar", "quantum_trace", "classical_trace", "gap"])
        for r in rows:
            w.writerow([repr(r.hbar), repr(r.quantum_trace), repr(r.classical_trace), repr(r.gap)])
