"""Jump-process sampling and the Monte Carlo Feynman-Kac kernel estimator.

The process holds at ``x`` for an exponential time of rate ``deg(x)/m(x)``
and then jumps to ``y`` with probability ``b(x,y)/deg(x)``.  Along a path
``x_0 -> x_1 -> ... -> x_N`` the parallel transport is
``Phi(x_{N-1}, x_N) ... Phi(x_0, x_1)`` and the path-ordered exponential is
the product, earliest sojourn leftmost, of ``U_k^{-1} exp(-dt_k V(x_k)/hbar) U_k``
with ``U_k`` the transport accumulated up to the arrival at ``x_k``.  The
kernel estimate averages ``1{X_t = y} A_t U_t^{-1} / m(y)`` over paths.

Randomness: path ``i`` under seed ``s`` draws from its own generator seeded
with a Philox counter-based generator keyed by ``(s, i)``.  Sums are accumulated exactly (as
rationals) so any partition of the path index range merges to bit-identical
means.
"""
from __future__ import annotations

import bisect
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from .bundle import Connection, Potential
from .errors import DomainError, NumericError
from .graph import GraphProvider, WeightedGraph, FiniteGraphProvider

DEFAULT_NMAX = 10**6


@dataclass(frozen=True)
class PathSample:
    """One trajectory on ``[0, horizon]``.

    ``times[k]`` is the arrival time at ``vertices[k]`` (``times[0] == 0``).
    ``exploded`` means the jump cap was hit before the horizon; the path is
    then only known on ``[0, times[-1]]``.
    """

    start: object
    horizon: float
    times: tuple
    vertices: tuple
    exploded: bool = False

    @property
    def n_jumps(self) -> int:
        return len(self.vertices) - 1

    @property
    def end(self):
        """``X_t`` (meaningless when exploded)."""
        return self.vertices[-1]

    def sojourns(self) -> list[float]:
        """Time spent at each visited vertex, the last one up to the horizon."""
        ts = list(self.times) + [self.horizon]
        return [ts[k + 1] - ts[k] for k in range(len(self.vertices))]


class JumpTable:
    """Per-vertex jump data pulled lazily from a provider and memoized."""

    def __init__(self, provider):
        if isinstance(provider, WeightedGraph):
            provider = FiniteGraphProvider(provider)
        self.provider = provider
        self._cache: dict = {}

    def __call__(self, x):
        entry = self._cache.get(x)
        if entry is None:
            nbrs = list(self.provider.neighbors(x))
            targets = [y for y, _ in nbrs]
            cum, acc = [], 0.0
            for _, w in nbrs:
                if not w > 0:
                    raise DomainError(f"nonpositive weight at ({x},{_})")
                acc += w
                cum.append(acc)
            mx = self.provider.measure(x)
            if not mx > 0:
                raise DomainError(f"nonpositive measure at {x!r}")
            rate = acc / mx
            if not math.isfinite(rate):
                raise NumericError(f"jump rate at {x!r} overflows (deg={acc}, m={mx})")
            entry = (targets, cum, acc, rate)
            self._cache[x] = entry
        return entry


def sample_path(provider, x0, t: float, rng: np.random.Generator, n_max: int = DEFAULT_NMAX, table: JumpTable | None = None) -> PathSample:
    """Sample the minimal jump process from ``x0`` up to horizon ``t``.

    Stops at the horizon, at an absorbing vertex (degree zero), or after
    ``n_max`` jumps, in which case the sample is flagged ``exploded``.
    """
    if not t >= 0:
        raise DomainError("horizon must be nonnegative")
    if n_max < 1:
        raise DomainError("n_max must be positive")
    if table is None:
        table = JumpTable(provider)
    x = x0
    now = 0.0
    times = [0.0]
    verts = [x0]
    exploded = False
    while True:
        targets, cum, deg, rate = table(x)
        if rate == 0.0:
            break
        now += rng.standard_exponential() / rate
        if now > t:
            break
        if len(verts) > n_max:
            exploded = True
            break
        k = bisect.bisect_right(cum, rng.random() * deg)
        x = targets[min(k, len(targets) - 1)]
        times.append(now)
        verts.append(x)
    return PathSample(x0, float(t), tuple(times), tuple(verts), exploded)


def parallel_transport(path: PathSample, phi: Connection) -> np.ndarray:
    """``Phi(x_{N-1}, x_N) ... Phi(x_0, x_1)``, identity when there are no jumps."""
    if path.exploded:
        raise DomainError("parallel transport is undefined on an exploded path")
    U = np.eye(phi.rank, dtype=complex)
    vs = path.vertices
    for k in range(len(vs) - 1):
        U = phi(vs[k], vs[k + 1]) @ U
    return U


class _HeatFactors:
    """Cached eigendecompositions of V(x)/hbar for exp(-dt V(x)/hbar)."""

    def __init__(self, V: Potential | None, hbar: float):
        if not hbar > 0:
            raise DomainError("hbar must be positive")
        self.V = V
        self.hbar = float(hbar)
        self._eig: dict = {}

    def __call__(self, x, dt: float):
        """``exp(-dt V(x)/hbar)`` or ``None`` where V(x) = 0."""
        e = self._eig.get(x, False)
        if e is False:
            a = self.V(x) if self.V is not None else None
            if a is None or not np.any(a):
                e = None
            else:
                lam, q = np.linalg.eigh(a / self.hbar)
                e = (lam, q)
            self._eig[x] = e
        if e is None:
            return None
        lam, q = e
        return (q * np.exp(-dt * lam)) @ q.conj().T


def ordered_exponential(vertices, durations, phi: Connection, V: Potential | None, hbar: float = 1.0, _factors=None) -> np.ndarray:
    """Ordered product over sojourns ``(vertices[k], durations[k])``.

    Consecutive equal vertices are read as one sojourn split in two (no
    transport between them), so splitting an interval leaves the result
    unchanged.
    """
    nu = phi.rank
    heat = _factors or _HeatFactors(V, hbar)
    A = np.eye(nu, dtype=complex)
    U = np.eye(nu, dtype=complex)
    prev = None
    for k, (x, dt) in enumerate(zip(vertices, durations)):
        if k > 0 and x != prev:
            U = phi(prev, x) @ U
        f = heat(x, dt)
        if f is not None:
            A = A @ (U.conj().T @ f @ U)
        prev = x
    return A


def path_ordered_exponential(path: PathSample, phi: Connection, V: Potential | None, hbar: float = 1.0) -> np.ndarray:
    """Path-ordered exponential of ``-V/hbar`` transported back to the start fiber."""
    if path.exploded:
        raise DomainError("path-ordered exponential is undefined on an exploded path")
    return ordered_exponential(path.vertices, path.sojourns(), phi, V, hbar)


def _walk(path: PathSample, phi: Connection, heat: _HeatFactors) -> tuple[np.ndarray | None, np.ndarray | None]:
    """``(A_t, U_t)`` in one pass over the path; ``None`` stands for the identity."""
    A = U = None
    vs, ts, t = path.vertices, path.times, path.horizon
    last = len(vs) - 1
    for k in range(last + 1):
        x = vs[k]
        dt = (ts[k + 1] if k < last else t) - ts[k]
        f = heat(x, dt)
        if f is not None:
            if U is not None:
                f = U.conj().T @ f @ U
            A = f if A is None else A @ f
        if k < last:
            step = phi(x, vs[k + 1])
            U = step if U is None else step @ U
    return A, U


# ---------------------------------------------------------------- estimates


def exact_sum(values) -> Fraction:
    """Exact rational sum of a float array (no rounding anywhere)."""
    a = np.asarray(values, dtype=float).ravel()
    a = a[a != 0.0]
    if a.size == 0:
        return Fraction(0)
    if not np.all(np.isfinite(a)):
        raise NumericError("non-finite contribution in Monte Carlo sum")
    mant, ex = np.frexp(a)
    ints = np.ldexp(mant, 53).astype(np.int64)
    ex = ex.astype(np.int64) - 53
    order = np.argsort(ex, kind="stable")
    ints, ex = ints[order], ex[order]
    uniq, starts = np.unique(ex, return_index=True)
    bounds = list(starts[1:]) + [ex.size]
    emin = int(uniq[0])
    total = 0
    for e, lo, hi in zip(uniq.tolist(), starts.tolist(), bounds):
        total += sum(ints[lo:hi].tolist()) << (e - emin)
    return Fraction(total) * (Fraction(2) ** emin)


def _frac_array(shape):
    return tuple(Fraction(0) for _ in range(int(np.prod(shape))))


@dataclass(frozen=True)
class KernelEstimate:
    """Monte Carlo estimate of one kernel block ``exp(-tH)(x, y)``.

    Sums are exact rationals over flattened ``nu x nu`` entries of the
    per-path contributions ``1{X_t = y} A_t U_t^{-1}`` (before dividing by
    ``m(y)``); ``sum_sq`` holds sums of squared moduli.
    """

    x: object
    y: object
    t: float
    hbar: float
    rank: int
    measure_y: float
    paths_total: int = 0
    paths_hit: int = 0
    paths_exploded: int = 0
    sum_re: tuple = ()
    sum_im: tuple = ()
    sum_sq: tuple = ()
    seed: int | None = None
    ranges: tuple = field(default=())

    @classmethod
    def empty(cls, x, y, t, hbar, rank, measure_y, seed=None) -> "KernelEstimate":
        z = _frac_array((rank, rank))
        return cls(x, y, float(t), float(hbar), int(rank), float(measure_y), 0, 0, 0, z, z, z, seed, ())

    @property
    def mean(self) -> np.ndarray:
        nu = self.rank
        if self.paths_total == 0:
            return np.zeros((nu, nu), dtype=complex)
        scale = Fraction(self.paths_total) * Fraction(self.measure_y)
        re = [float(s / scale) for s in self.sum_re]
        im = [float(s / scale) for s in self.sum_im]
        return (np.array(re) + 1j * np.array(im)).reshape(nu, nu)

    @property
    def stderr(self) -> np.ndarray:
        """Entrywise standard error of :attr:`mean` (real and imaginary parts pooled)."""
        nu, N = self.rank, self.paths_total
        if N < 2:
            return np.full((nu, nu), np.inf if N == 0 else 0.0)
        out = []
        for sr, si, sq in zip(self.sum_re, self.sum_im, self.sum_sq):
            var = (sq - (sr * sr + si * si) / N) / (N - 1)
            out.append(math.sqrt(max(float(var), 0.0) / N) / self.measure_y)
        return np.array(out).reshape(nu, nu)

    def report(self, labels=None) -> dict:
        """MC report fields; complex entries as ``[re, im]`` pairs."""
        mean, se = self.mean, self.stderr
        lab = (lambda v: labels[v]) if labels is not None else (lambda v: v)
        return {
            "x": lab(self.x),
            "y": lab(self.y),
            "t": self.t,
            "hbar": self.hbar,
            "paths": self.paths_total,
            "paths_hit": self.paths_hit,
            "paths_exploded": self.paths_exploded,
            "mean": [[[float(z.real), float(z.imag)] for z in row] for row in mean],
            "stderr": [[float(s) for s in row] for row in se],
            "seed": self.seed,
        }


def merge_estimates(a: KernelEstimate, b: KernelEstimate) -> KernelEstimate:
    """Pool two estimates of the same block drawn from disjoint path ranges."""
    if (a.x, a.y, a.t, a.hbar, a.rank, a.measure_y) != (b.x, b.y, b.t, b.hbar, b.rank, b.measure_y):
        raise DomainError("cannot merge estimates of different targets")
    if a.paths_total == 0 and not a.ranges:
        return b
    if b.paths_total == 0 and not b.ranges:
        return a
    if a.seed != b.seed:
        raise DomainError("cannot merge estimates drawn under different seeds")
    for lo, hi in a.ranges:
        for lo2, hi2 in b.ranges:
            if lo < hi2 and lo2 < hi:
                raise DomainError("path index ranges overlap")
    return replace(
        a,
        paths_total=a.paths_total + b.paths_total,
        paths_hit=a.paths_hit + b.paths_hit,
        paths_exploded=a.paths_exploded + b.paths_exploded,
        sum_re=tuple(p + q for p, q in zip(a.sum_re, b.sum_re)),
        sum_im=tuple(p + q for p, q in zip(a.sum_im, b.sum_im)),
        sum_sq=tuple(p + q for p, q in zip(a.sum_sq, b.sum_sq)),
        ranges=tuple(sorted(a.ranges + b.ranges)),
    )


class PathStreams:
    """Counter-based random streams: path ``i`` under ``seed`` uses Philox keyed by ``(seed, i)``.

    One bit generator is re-keyed per path, so the stream of a path depends
    only on ``(seed, i)`` and never on which other paths were drawn.  Not
    safe to share between threads; make one per worker.
    """

    def __init__(self, seed: int):
        seed = int(seed)
        if not 0 <= seed < 2**64:
            raise DomainError("seed must fit in 64 unsigned bits")
        self.seed = seed
        self._bg = np.random.Philox(key=[seed, 0])
        self._gen = np.random.Generator(self._bg)
        self._zeros4 = np.zeros(4, dtype=np.uint64)

    def __call__(self, index: int) -> np.random.Generator:
        self._bg.state = {
            "bit_generator": "Philox",
            "state": {"counter": self._zeros4.copy(), "key": np.array([self.seed, index], dtype=np.uint64)},
            "buffer": self._zeros4.copy(),
            "buffer_pos": 4,
            "has_uint32": 0,
            "uinteger": 0,
        }
        return self._gen


def path_rng(seed: int, index: int) -> np.random.Generator:
    """Fresh generator for path ``index`` under ``seed`` (same stream as :class:`PathStreams`)."""
    return np.random.Generator(np.random.Philox(key=[int(seed), int(index)]))


def _walk_batch(paths: list, phi: Connection, heat: _HeatFactors) -> np.ndarray:
    """Contributions ``A_t U_t^{-1}`` for many paths at once, shape ``(P, nu, nu)``.

    Each path's arithmetic is the same sequence of matrix products whatever
    the batch it sits in (rows past a path's end are masked, not padded), so
    results do not depend on how paths are grouped.
    """
    nu = phi.rank
    P = len(paths)
    out = np.broadcast_to(np.eye(nu, dtype=complex), (P, nu, nu)).copy()
    if P == 0:
        return out
    lengths = np.array([len(p.vertices) for p in paths])
    L = int(lengths.max())
    vid: dict = {}
    lam, qs = [], []
    has_v = False
    for p in paths:
        for v in p.vertices:
            if v not in vid:
                vid[v] = len(vid)
                heat(v, 0.0)
                e = heat._eig[v]
                if e is None:
                    lam.append(np.zeros(nu))
                    qs.append(np.eye(nu, dtype=complex))
                else:
                    has_v = True
                    lam.append(e[0])
                    qs.append(e[1])
    lam = np.array(lam)
    qs = np.array(qs)
    qh = qs.conj().transpose(0, 2, 1)
    vix = np.zeros((P, L), dtype=np.int64)
    dts = np.zeros((P, L))
    steps: dict = {}
    step_ix = np.full((P, max(L - 1, 1)), -1, dtype=np.int64)
    step_mats = []
    for r, p in enumerate(paths):
        vs, ts = p.vertices, p.times
        n = len(vs)
        for k in range(n):
            vix[r, k] = vid[vs[k]]
            dts[r, k] = (ts[k + 1] if k < n - 1 else p.horizon) - ts[k]
            if k < n - 1:
                key = (vs[k], vs[k + 1])
                j = steps.get(key)
                if j is None:
                    j = steps[key] = len(step_mats)
                    step_mats.append(phi(*key))
                step_ix[r, k] = j
    step_mats = np.array(step_mats) if step_mats else np.zeros((0, nu, nu), dtype=complex)

    A = out
    U = np.broadcast_to(np.eye(nu, dtype=complex), (P, nu, nu)).copy()
    for k in range(L):
        live = np.nonzero(lengths > k)[0]
        if has_v:
            xi = vix[live, k]
            f = (qs[xi] * np.exp(-dts[live, k, None] * lam[xi])[:, None, :]) @ qh[xi]
            if k > 0:
                Ul = U[live]
                f = Ul.conj().transpose(0, 2, 1) @ f @ Ul
            A[live] = A[live] @ f
        mv = np.nonzero(lengths > k + 1)[0]
        if mv.size:
            U[mv] = step_mats[step_ix[mv, k]] @ U[mv]
    return A @ U.conj().transpose(0, 2, 1)


def _row_chunk(provider, phi, V, hbar, x, targets, t, seed, start, stop, n_max):
    nu = phi.rank
    table = JumpTable(provider)
    heat = _HeatFactors(V, hbar)
    slot = {y: k for k, y in enumerate(targets)}
    hit_paths = [[] for _ in targets]
    exploded = 0
    streams = PathStreams(seed)
    for i in range(start, stop):
        path = sample_path(provider, x, t, streams(i), n_max, table)
        if path.exploded:
            exploded += 1
            continue
        k = slot.get(path.end)
        if k is not None:
            hit_paths[k].append(path)
    out = {}
    for y, k in slot.items():
        c = _walk_batch(hit_paths[k], phi, heat).reshape(-1, nu * nu)
        sq = c.real**2 + c.imag**2
        out[y] = KernelEstimate(
            x, y, float(t), float(hbar), nu, float(provider.measure(y)),
            stop - start, len(hit_paths[k]), exploded,
            tuple(exact_sum(c[:, j].real) for j in range(nu * nu)),
            tuple(exact_sum(c[:, j].imag) for j in range(nu * nu)),
            tuple(exact_sum(sq[:, j]) for j in range(nu * nu)),
            seed, ((start, stop),) if stop > start else (),
        )
    return out


def fk_kernel_row(provider, phi: Connection, V: Potential | None, hbar: float, x, targets, t: float,
                  paths: int, seed: int = 0, n_max: int = DEFAULT_NMAX, first_path: int = 0,
                  workers: int = 1, chunk: int = 20000) -> dict:
    """Estimate ``exp(-t H_{Phi,V/hbar})(x, y)`` for every ``y`` in ``targets`` from one path ensemble.

    Paths ``first_path .. first_path + paths - 1`` are used.  With
    ``workers > 1`` contiguous chunks run in separate processes; the merged
    result is identical to the sequential one.
    """
    if isinstance(provider, WeightedGraph):
        provider = FiniteGraphProvider(provider)
    if not t > 0:
        raise DomainError("t must be positive")
    if paths < 1:
        raise DomainError("paths must be positive")
    if V is not None and V.rank != phi.rank:
        raise DomainError("potential and connection ranks differ")
    targets = list(dict.fromkeys(targets))
    for y in targets:
        provider.measure(y)
    bounds = list(range(first_path, first_path + paths, chunk)) + [first_path + paths]
    jobs = list(zip(bounds[:-1], bounds[1:]))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futs = [pool.submit(_row_chunk, provider, phi, V, hbar, x, targets, t, seed, lo, hi, n_max) for lo, hi in jobs]
            parts = [f.result() for f in futs]
    else:
        parts = [_row_chunk(provider, phi, V, hbar, x, targets, t, seed, lo, hi, n_max) for lo, hi in jobs]
    out = {}
    for y in targets:
        acc = parts[0][y]
        for p in parts[1:]:
            acc = merge_estimates(acc, p[y])
        out[y] = acc
    return out


def fk_kernel_estimate(provider, phi: Connection, V: Potential | None, hbar: float, x, y, t: float,
                       paths: int, seed: int = 0, n_max: int = DEFAULT_NMAX, first_path: int = 0,
                       workers: int = 1) -> KernelEstimate:
    """Monte Carlo estimate of the kernel block ``exp(-t H_{Phi,V/hbar})(x, y)``.

    Unconditional form ``m(y)^{-1} E^x[1{X_t = y} A_t U_t^{-1}]``; exploded
    paths contribute zero and are counted in ``paths_exploded``.
    """
    return fk_kernel_row(provider, phi, V, hbar, x, [y], t, paths, seed, n_max, first_path, workers)[y]
