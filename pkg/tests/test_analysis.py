import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from graphfk import (
    Connection,
    DomainError,
    Potential,
    WeightedGraph,
    classical_partition_function,
    golden_thompson_check,
    kato_functional,
    semiclassical_sweep,
)
from graphfk.analysis import DEFAULT_HBAR_GRID, write_sweep_csv
from graphfk.instances import random_hermitian, random_instance, two_vertex


def _expm_series(a, terms=80):
    out = np.eye(a.shape[0], dtype=complex)
    term = np.eye(a.shape[0], dtype=complex)
    for k in range(1, terms):
        term = term @ a / k
        out = out + term
    return out


def _kato_quadrature(g, w, t, steps=4000):
    """Midpoint rule over s with scipy's expm: independent of the closed form."""
    from scipy.linalg import expm

    from graphfk import assemble

    M = assemble(g, Connection.trivial(1, g)).matrix.real
    ds = t / steps
    acc = np.zeros(g.n)
    for k in range(steps):
        acc += expm(-(k + 0.5) * ds * M) @ np.abs(w) * ds
    return acc.max()


def test_kato_functional_examples():
    inst = random_instance(n=5, nu=1, seed=2)
    g = inst.graph
    for t in (0.01, 0.3, 2.0):
        assert abs(kato_functional(g, np.full(g.n, 1.7), t) - 1.7 * t) <= 1e-10
        assert kato_functional(g, np.zeros(g.n), t) == 0
    w = {2: 1.0}
    vals = [kato_functional(g, w, t) for t in (1.0, 0.1, 0.01, 0.001)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))
    assert vals[-1] <= 1.01e-3
    assert abs(vals[1] - _kato_quadrature(g, np.eye(g.n)[2], 0.1, steps=400)) <= 1e-6
    with pytest.raises(DomainError):
        kato_functional(g, w, 0.0)


@given(seed=st.integers(0, 2**32 - 1))
@settings(max_examples=20, deadline=None)
def test_kato_functional_properties(seed):
    rng = np.random.default_rng(seed)
    inst = random_instance(n=5, nu=1, seed=seed)
    g = inst.graph
    w1 = rng.normal(size=g.n) + 1j * rng.normal(size=g.n)
    w2 = rng.normal(size=g.n)
    ts = np.sort(rng.uniform(0.001, 3, size=4))
    vals = [kato_functional(g, w1, t) for t in ts]
    assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))
    t = float(ts[-1])
    assert kato_functional(g, w1 + w2, t) <= kato_functional(g, w1, t) + kato_functional(g, w2, t) + 1e-12
    assert kato_functional(g, w1, 1e-6) <= 1e-6 * np.abs(w1).max() * (1 + 1e-6)


def test_classical_partition_function(rng):
    assert classical_partition_function(None, 1.0, 5, 3) == 15
    assert classical_partition_function(Potential.zero(3), 1.0, 5) == 15
    a, b, beta = 0.4, -2.0, 0.8
    assert classical_partition_function(Potential(2, {0: np.diag([a, b])}), beta, 1) == pytest.approx(
        np.exp(-beta * a) + np.exp(-beta * b), abs=1e-14)
    mats = {x: random_hermitian(3, rng) for x in range(4)}
    beta = 0.9
    oracle = sum(np.trace(_expm_series(-beta * m)).real for m in mats.values())
    assert abs(classical_partition_function(Potential(3, mats), beta, 4) - oracle) <= 1e-10


def test_golden_thompson_examples(inst6, edgeless6):
    q, c, holds = golden_thompson_check(inst6.graph, inst6.connection, None, 1.0, 0.5)
    assert holds and q <= 12 and c == 12
    q, c, holds = golden_thompson_check(edgeless6.graph, edgeless6.connection, edgeless6.potential, 1.3, 0.2)
    assert holds and abs(q - c) <= 1e-10
    q, c, holds = golden_thompson_check(inst6.graph, inst6.connection, inst6.potential, 1.0, 0.5)
    assert holds and q < c


@given(seed=st.integers(0, 2**32 - 1), beta=st.floats(0.1, 3.0), hbar=st.floats(1e-3, 5.0))
@settings(max_examples=30, deadline=None)
def test_golden_thompson_random(seed, beta, hbar):
    inst = random_instance(n=5, nu=2, seed=seed)
    _, _, holds = golden_thompson_check(inst.graph, inst.connection, inst.potential, beta, hbar)
    assert holds


def test_sweep_edgeless_gap_zero(edgeless6):
    rows = semiclassical_sweep(edgeless6.graph, edgeless6.connection, edgeless6.potential, 1.0)
    assert len(rows) == 13 and rows[0].hbar == 1.0 and rows[-1].hbar == pytest.approx(1e-3)
    assert all(abs(r.gap) <= 1e-10 for r in rows)


def test_sweep_zero_potential(inst6):
    rows = semiclassical_sweep(inst6.graph, inst6.connection, None, 1.0)
    assert all(r.classical_trace == 12 and r.quantum_trace <= 12 + 1e-12 for r in rows)
    assert rows[-1].gap < rows[0].gap


def test_two_vertex_sweep():
    inst = two_vertex(v=[0.3, -0.5])
    rows = semiclassical_sweep(inst.graph, inst.connection, inst.potential, 1.0, [1, 0.1, 0.01, 0.001])
    gaps = [r.gap for r in rows]
    assert all(b < a for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] < 0.01 * gaps[0]
    # exact 2x2 check of the first row
    M = np.array([[1 + 0.3, -1], [-1, 1 - 0.5]])
    assert rows[0].quantum_trace == pytest.approx(np.sum(np.exp(-np.linalg.eigvalsh(M))), abs=1e-12)


def test_sweep_rejects_bad_grid(inst6):
    with pytest.raises(DomainError):
        semiclassical_sweep(inst6.graph, inst6.connection, inst6.potential, 1.0, [0.1, 1.0])
    with pytest.raises(DomainError):
        semiclassical_sweep(inst6.graph, inst6.connection, inst6.potential, 1.0, [])


def test_default_grid():
    assert len(DEFAULT_HBAR_GRID) == 13
    ratios = np.array(DEFAULT_HBAR_GRID[:-1]) / np.array(DEFAULT_HBAR_GRID[1:])
    assert np.allclose(ratios, 10 ** 0.25)


def test_sweep_csv(tmp_path, edgeless6):
    rows = semiclassical_sweep(edgeless6.graph, edgeless6.connection, edgeless6.potential, 1.0, [1.0, 0.5])
    write_sweep_csv(tmp_path / "s.csv", rows)
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "hbar,quantum_trace,classical_trace,gap" and len(lines) == 3
