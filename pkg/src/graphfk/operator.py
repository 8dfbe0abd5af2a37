"""Dense assembly of H_{Phi, V/hbar} and its exact semigroup.

Sections are flattened vertex-major: entry ``x * nu + i`` is component ``i``
of the fiber at ``x``.  The generator acts as

    (H psi)(x) = 1/m(x) sum_y b(x,y) (psi(x) - Phi(y,x) psi(y)) + V(x) psi(x) / hbar,

which is self-adjoint for the m-weighted inner product but not Hermitian as
a raw matrix unless m is constant.  Conjugating with ``D = diag(sqrt(m))``
gives the Hermitian ``S = D M D^{-1}`` that we hand to ``eigh``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .bundle import Connection, Potential, TOL
from .errors import DomainError, NumericError
from .graph import WeightedGraph, validate_graph


@dataclass(frozen=True, eq=False)
class AssembledOperator:
    graph: WeightedGraph
    rank: int
    hbar: float
    matrix: np.ndarray  # M, acts on flat sections
    hermitian: np.ndarray  # S = D M D^{-1}
    eigenvalues: np.ndarray  # ascending
    eigenvectors: np.ndarray  # orthonormal columns, eigenvectors of S
    sqrt_m: np.ndarray  # flat, length n * nu

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def dim(self) -> int:
        return self.graph.n * self.rank

    def block(self, x: int, y: int) -> np.ndarray:
        nu = self.rank
        return self.matrix[x * nu : (x + 1) * nu, y * nu : (y + 1) * nu]

    def apply(self, psi: np.ndarray) -> np.ndarray:
        """``H psi`` for a section given as an ``(n, nu)`` array."""
        return (self.matrix @ np.asarray(psi, dtype=complex).reshape(-1)).reshape(self.n, self.rank)

    def inner(self, psi1: np.ndarray, psi2: np.ndarray) -> complex:
        """m-weighted inner product, linear in the first slot."""
        a = np.asarray(psi1, dtype=complex).reshape(self.n, self.rank)
        c = np.asarray(psi2, dtype=complex).reshape(self.n, self.rank)
        return complex(np.sum(np.einsum("xi,xi->x", a, c.conj()) * self.graph.measure_array))


@dataclass(frozen=True, eq=False)
class KernelMatrix:
    """Blocks ``K(t, x, y)`` in Hom(F_y, F_x), normalized against m(y).

    ``(e^{-tH} psi)(x) = sum_y K(t, x, y) psi(y) m(y)``.
    """

    t: float
    blocks: np.ndarray  # (n, n, nu, nu)
    graph: WeightedGraph

    def __call__(self, x: int, y: int) -> np.ndarray:
        return self.blocks[x, y]

    @property
    def rank(self) -> int:
        return self.blocks.shape[2]

    def rows(self):
        """CSV rows ``(t, x, y, i, j, re, im)`` in a fixed order."""
        labels = self.graph.labels
        n, _, nu, _ = self.blocks.shape
        for x in range(n):
            for y in range(n):
                for i in range(nu):
                    for j in range(nu):
                        z = self.blocks[x, y, i, j]
                        yield (repr(float(self.t)), labels[x], labels[y], i, j, repr(float(z.real)), repr(float(z.imag)))


def assemble(g: WeightedGraph, phi: Connection, V: Potential | None = None, hbar: float = 1.0) -> AssembledOperator:
    """Assemble the m-weighted generator and cache its spectral decomposition.

    Raises
    ------
    DomainError
        Invalid graph, rank mismatch, connection entry off the graph, hbar <= 0.
    NumericError
        The Hermitian eigensolver did not converge.
    """
    if not isinstance(g, WeightedGraph):
        raise DomainError("assembly needs a finite WeightedGraph")
    report = validate_graph(g)
    if report:
        raise DomainError("invalid graph: " + "; ".join(map(str, report)))
    if not hbar > 0:
        raise DomainError("hbar must be positive")
    nu = phi.rank
    if V is not None and V.rank != nu:
        raise DomainError(f"potential rank {V.rank} != connection rank {nu}")
    for (x, y), _ in phi.items():
        if g.weight(x, y) <= 0:
            raise DomainError(f"connection entry on non-edge ({x},{y})")

    n = g.n
    m = g.measure_array
    deg = np.zeros(n)
    for (u, v), w in g.edges().items():
        deg[u] += w
        deg[v] += w
    with np.errstate(over="ignore", invalid="ignore"):
        rates = deg / m
    if not np.all(np.isfinite(rates)):
        raise NumericError("jump rate deg(x)/m(x) overflows at vertex " + str(int(np.argmin(np.isfinite(rates)))))
    M = np.zeros((n * nu, n * nu), dtype=complex)
    eye = np.eye(nu)
    for (u, v), w in g.edges().items():
        p_uv = phi(u, v)
        # block (u, v) carries Phi(v, u) = Phi(u, v)^*, block (v, u) carries Phi(u, v)
        M[u * nu : (u + 1) * nu, v * nu : (v + 1) * nu] = -(w / m[u]) * p_uv.conj().T
        M[v * nu : (v + 1) * nu, u * nu : (u + 1) * nu] = -(w / m[v]) * p_uv
    vx = V.array(n) if V is not None else np.zeros((n, nu, nu), dtype=complex)
    for x in range(n):
        M[x * nu : (x + 1) * nu, x * nu : (x + 1) * nu] = (deg[x] / m[x]) * eye + vx[x] / hbar
    if not np.all(np.isfinite(M)):
        raise NumericError("operator matrix has non-finite entries")

    sqrt_m = np.repeat(np.sqrt(m), nu)
    S = (sqrt_m[:, None] * M) / sqrt_m[None, :]
    if np.max(np.abs(S - S.conj().T), initial=0.0) > TOL * max(1.0, np.max(np.abs(S), initial=0.0)):
        raise NumericError("symmetrized operator is not Hermitian")
    S = 0.5 * (S + S.conj().T)
    try:
        lam, Q = np.linalg.eigh(S)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"eigensolver failed: {exc}") from exc
    for a in (M, S, lam, Q, sqrt_m):
        a.setflags(write=False)
    return AssembledOperator(g, nu, float(hbar), M, S, lam, Q, sqrt_m)


def semigroup_matrix(H: AssembledOperator, t: float) -> np.ndarray:
    """``exp(-t M)`` on flat sections."""
    if not t >= 0:
        raise DomainError("t must be nonnegative")
    Q = H.eigenvectors
    with np.errstate(over="raise"):
        try:
            es = np.exp(-t * H.eigenvalues)
        except FloatingPointError as exc:
            raise NumericError("semigroup overflows") from exc
    E = (Q * es) @ Q.conj().T
    return E * (H.sqrt_m[None, :] / H.sqrt_m[:, None])


def semigroup_kernel_exact(H: AssembledOperator, t: float) -> KernelMatrix:
    """Integral kernel of ``exp(-t H)`` against the measure m."""
    E = semigroup_matrix(H, t)
    n, nu = H.n, H.rank
    blocks = E.reshape(n, nu, n, nu).transpose(0, 2, 1, 3) / H.graph.measure_array[None, :, None, None]
    blocks = np.ascontiguousarray(blocks)
    blocks.setflags(write=False)
    return KernelMatrix(float(t), blocks, H.graph)


def semigroup_trace(H: AssembledOperator, t: float) -> float:
    """``tr exp(-t H) = sum_i exp(-t lambda_i)``."""
    if not t >= 0:
        raise DomainError("t must be nonnegative")
    return float(np.sum(np.exp(-t * H.eigenvalues)))


def write_kernel_csv(path, kernels) -> None:
    """Kernel export with columns t, x, y, i, j, re, im."""
    if isinstance(kernels, KernelMatrix):
        kernels = [kernels]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "x", "y", "i", "j", "re", "im"])
        for k in kernels:
            w.writerows(k.rows())


def write_trace_csv(path, rows) -> None:
    """Trace export with columns t, trace; ``rows`` are ``(t, trace)`` pairs."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "trace"])
        for t, tr in rows:
            w.writerow([repr(float(t)), repr(float(tr))])
