"""Hermitian bundles over a weighted graph: connections, potentials, forms.

Fibers are identified with C^nu through fixed orthonormal frames, so every
fiber inner product is ``(u, v) = sum_i u_i * conj(v_i)`` (linear in the
first slot) and a unitary connection is a plain unitary matrix per edge.

Orientation convention: ``Phi(x, y)`` maps the fiber at ``x`` to the fiber at
``y``.  Only the canonical orientation ``x < y`` is stored; the reverse is the
conjugate transpose, so ``Phi(y, x) = Phi(x, y)^{-1}`` holds exactly.
"""
from __future__ import annotations

from typing import Mapping

import numpy as np

from .errors import DomainError
from .graph import WeightedGraph

TOL = 1e-10


def _canon(x, y):
    return (x, y) if x < y else (y, x)


def _as_matrix(a, nu: int, what: str) -> np.ndarray:
    a = np.array(a, dtype=complex)
    if a.ndim == 0 and nu == 1:
        a = a.reshape(1, 1)
    if a.shape != (nu, nu):
        raise DomainError(f"{what} has shape {a.shape}, expected ({nu}, {nu})")
    return a


def is_unitary(u: np.ndarray, tol: float = TOL) -> bool:
    u = np.asarray(u)
    return bool(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0])), initial=0.0) <= tol)


def is_hermitian(a: np.ndarray, tol: float = TOL) -> bool:
    a = np.asarray(a)
    return bool(np.max(np.abs(a - a.conj().T), initial=0.0) <= tol)


class Connection:
    """Unitary b-connection of rank ``nu``.

    Parameters
    ----------
    rank : int
    matrices : mapping ``(x, y) -> nu x nu`` array, optional
        ``Phi(x, y)`` for some orientation of each edge.  Edges without an
        entry carry the identity.
    graph : WeightedGraph, optional
        When given, entries must sit on edges of this graph and
        :meth:`on_edge` can reject non-edges.
    """

    def __init__(self, rank: int, matrices: Mapping | None = None, graph: WeightedGraph | None = None):
        if int(rank) < 1:
            raise DomainError("rank must be >= 1")
        self.rank = int(rank)
        self.graph = graph
        self._eye = np.eye(self.rank, dtype=complex)
        self._eye.setflags(write=False)
        store = {}
        for (x, y), a in (matrices or {}).items():
            if x == y:
                raise DomainError(f"connection entry on the diagonal ({x},{y})")
            if graph is not None and graph.weight(x, y) <= 0:
                raise DomainError(f"connection entry on non-edge ({x},{y})")
            a = _as_matrix(a, self.rank, f"Phi({x},{y})")
            if not is_unitary(a):
                raise DomainError(f"Phi({x},{y}) is not unitary within {TOL}")
            key = _canon(x, y)
            if key in store:
                raise DomainError(f"duplicate connection entry for edge {key}")
            a = a if key == (x, y) else a.conj().T.copy()
            a.setflags(write=False)
            store[key] = a
        self._store = store

    @classmethod
    def trivial(cls, rank: int = 1, graph: WeightedGraph | None = None) -> "Connection":
        return cls(rank, {}, graph)

    def __call__(self, x, y) -> np.ndarray:
        """``Phi(x, y)``: fiber at x -> fiber at y."""
        a = self._store.get(_canon(x, y))
        if a is None:
            return self._eye
        return a if x < y else a.conj().T

    def on_edge(self, x, y) -> None:
        if self.graph is not None and self.graph.weight(x, y) <= 0:
            raise DomainError(f"({x},{y}) is not an edge")

    def items(self):
        """Stored canonical entries ``((x, y), Phi(x, y))`` with x < y."""
        return self._store.items()

    def block_array(self, graph: WeightedGraph) -> dict[tuple[int, int], np.ndarray]:
        return {(u, v): self(u, v) for (u, v) in graph.edges()}


class Potential:
    """Pointwise self-adjoint endomorphism field; unspecified vertices carry 0."""

    def __init__(self, rank: int, matrices: Mapping | None = None, check: bool = True):
        if int(rank) < 1:
            raise DomainError("rank must be >= 1")
        self.rank = int(rank)
        self._zero = np.zeros((self.rank, self.rank), dtype=complex)
        self._zero.setflags(write=False)
        store = {}
        for x, a in (matrices or {}).items():
            a = _as_matrix(a, self.rank, f"V({x})")
            if check and not is_hermitian(a):
                raise DomainError(f"V({x}) is not self-adjoint within {TOL}")
            a.setflags(write=False)
            store[x] = a
        self._store = store

    @classmethod
    def zero(cls, rank: int = 1) -> "Potential":
        return cls(rank)

    @classmethod
    def from_array(cls, values) -> "Potential":
        """From an ``(n, nu, nu)`` array, or ``(n,)`` for rank one."""
        values = np.asarray(values, dtype=complex)
        if values.ndim == 1:
            values = values[:, None, None]
        return cls(values.shape[1], {i: values[i] for i in range(values.shape[0])})

    def __call__(self, x) -> np.ndarray:
        return self._store.get(x, self._zero)

    def items(self):
        return self._store.items()

    def array(self, n: int) -> np.ndarray:
        out = np.zeros((n, self.rank, self.rank), dtype=complex)
        for x, a in self._store.items():
            if not (0 <= x < n):
                raise DomainError(f"potential given at unknown vertex {x!r}")
            out[x] = a
        return out

    def is_nonnegative(self, tol: float = TOL) -> bool:
        return all(np.linalg.eigvalsh(a)[0] >= -tol for a in self._store.values())


class GaugeTransform:
    """Per-vertex unitary change of frame; unspecified vertices carry I."""

    def __init__(self, rank: int, matrices: Mapping | None = None):
        self.rank = int(rank)
        self._eye = np.eye(self.rank, dtype=complex)
        store = {}
        for x, a in (matrices or {}).items():
            a = _as_matrix(a, self.rank, f"g({x})")
            if not is_unitary(a):
                raise DomainError(f"g({x}) is not unitary within {TOL}")
            store[x] = a
        self._store = store

    def __call__(self, x) -> np.ndarray:
        return self._store.get(x, self._eye)


def section_array(psi, n: int, nu: int) -> np.ndarray:
    """Coerce a section to an ``(n, nu)`` complex array.

    ``psi`` may already be such an array (or ``(n,)`` for rank one) or a
    mapping ``x -> vector`` with finite support.
    """
    if isinstance(psi, Mapping):
        out = np.zeros((n, nu), dtype=complex)
        for x, v in psi.items():
            if not (0 <= x < n):
                raise DomainError(f"section supported at unknown vertex {x!r}")
            out[x] = np.broadcast_to(np.asarray(v, dtype=complex), (nu,))
        return out
    out = np.asarray(psi, dtype=complex)
    if out.ndim == 1 and nu == 1:
        out = out[:, None]
    if out.shape != (n, nu):
        raise DomainError(f"section has shape {out.shape}, expected ({n}, {nu})")
    return out


def covariant_derivative(phi: Connection, psi, x, y) -> np.ndarray:
    """``Phi(y, x) psi(y) - psi(x)``, a vector in the fiber at ``x``."""
    phi.on_edge(x, y)
    if phi.graph is None and x == y:
        raise DomainError("covariant derivative needs an edge x ~ y")
    return phi(y, x) @ _value(psi, y, phi.rank) - _value(psi, x, phi.rank)


def _value(psi, x, nu: int) -> np.ndarray:
    if isinstance(psi, Mapping):
        v = psi.get(x, 0.0)
    else:
        v = psi[x]
    return np.broadcast_to(np.asarray(v, dtype=complex), (nu,))


def _edge_differences(g: WeightedGraph, phi: Connection, psi: np.ndarray):
    """Covariant differences for both orientations of every edge."""
    us, vs, ws, d_uv, d_vu = [], [], [], [], []
    for (u, v), w in g.edges().items():
        p_vu = phi(v, u)
        us.append(u)
        vs.append(v)
        ws.append(w)
        d_uv.append(p_vu @ psi[v] - psi[u])
        d_vu.append(p_vu.conj().T @ psi[u] - psi[v])
    return np.array(ws), np.array(d_uv), np.array(d_vu)


def evaluate_form(g: WeightedGraph, phi: Connection, V: Potential | None, hbar: float, psi1, psi2) -> complex:
    """Sesquilinear form Q_{Phi, V/hbar}(psi1, psi2) on finitely supported sections.

    Kinetic part ``1/2 sum_{x~y} b(x,y) (grad psi1(x,y), grad psi2(x,y))_x`` over
    ordered pairs, plus ``sum_x (V(x) psi1(x) / hbar, psi2(x))_x m(x)``.
    """
    nu = phi.rank
    a = section_array(psi1, g.n, nu)
    c = section_array(psi2, g.n, nu)
    total = 0j
    if g.edges():
        w, d1a, d1b = _edge_differences(g, phi, a)
        _, d2a, d2b = _edge_differences(g, phi, c)
        total += 0.5 * np.sum(w * (np.einsum("ei,ei->e", d1a, d2a.conj()) + np.einsum("ei,ei->e", d1b, d2b.conj())))
    if V is not None:
        if hbar <= 0:
            raise DomainError("hbar must be positive")
        vx = V.array(g.n)
        pot = np.einsum("xij,xj,xi->x", vx, a, c.conj())
        total += np.sum(pot * g.measure_array) / hbar
    return complex(total)


def kato_decompose(V: Potential) -> tuple[Potential, Potential]:
    """Spectral split V = V+ - V- with both parts nonnegative.

    V+ keeps the nonnegative eigenvalues of each V(x); V- = V+ - V.
    """
    plus, minus = {}, {}
    for x, a in V.items():
        if not is_hermitian(a):
            raise DomainError(f"V({x}) is not self-adjoint")
        lam, q = np.linalg.eigh(0.5 * (a + a.conj().T))
        p = (q * np.maximum(lam, 0.0)) @ q.conj().T
        p = 0.5 * (p + p.conj().T)
        mneg = p - a
        plus[x] = p
        minus[x] = 0.5 * (mneg + mneg.conj().T)
    return Potential(V.rank, plus), Potential(V.rank, minus)


def gauge_transform(phi: Connection, V: Potential | None, g: GaugeTransform) -> tuple[Connection, Potential | None]:
    """Apply a gauge: Phi'(x,y) = g(y) Phi(x,y) g(x)*, V'(x) = g(x) V(x) g(x)*.

    Every edge of ``phi.graph`` gets an explicit entry (the transform of an
    identity entry is generally not the identity).
    """
    if phi.graph is not None:
        keys = list(phi.graph.edges())
    else:
        keys = [k for k, _ in phi.items()]
    mats = {(x, y): g(y) @ phi(x, y) @ g(x).conj().T for (x, y) in keys}
    new_phi = Connection(phi.rank, mats, phi.graph)
    if V is None:
        return new_phi, None
    vx = {}
    for x, a in V.items():
        b = g(x) @ a @ g(x).conj().T
        vx[x] = 0.5 * (b + b.conj().T)
    return new_phi, Potential(V.rank, vx)
