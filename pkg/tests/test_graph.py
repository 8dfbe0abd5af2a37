import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from graphfk import (
    DomainError,
    FiniteGraphProvider,
    WeightedGraph,
    form_bound_constant,
    validate_graph,
    vertex_degree,
)
from graphfk.graph import GeometricChainProvider, IntegerLatticeProvider, graph_from_raw, jump_rate
from graphfk.errors import NumericError


def test_minimal_valid_graph_has_empty_report():
    assert validate_graph({(1, 2): 1.0, (2, 1): 1.0}, {1: 1.0, 2: 1.0}) == []


def test_asymmetry_reported_once():
    report = validate_graph({(1, 2): 1.0, (2, 1): 2.0}, {1: 1.0, 2: 1.0})
    assert [v.kind for v in report] == ["asymmetric"]


def test_zero_measure_reported():
    report = validate_graph({(1, 2): 1.0, (2, 1): 1.0, (2, 3): 1.0, (3, 2): 1.0}, {1: 1.0, 2: 1.0, 3: 0.0})
    assert [v.kind for v in report] == ["nonpositive_measure"]
    assert report[0].where == (3,)


def test_other_violations_are_data():
    report = validate_graph({(1, 1): 2.0, (1, 4): 1.0, (4, 1): 1.0}, {1: 1.0})
    kinds = sorted(v.kind for v in report)
    assert kinds == ["diagonal", "unknown_vertex", "unknown_vertex"]


def test_constructor_rejects_bad_data():
    with pytest.raises(DomainError):
        WeightedGraph([1.0, 1.0], [(0, 1, 1.0), (1, 0, 1.0)])
    with pytest.raises(DomainError):
        WeightedGraph([1.0, 0.0], [(0, 1, 1.0)])
    with pytest.raises(DomainError):
        WeightedGraph([1.0, 1.0], [(0, 0, 1.0)])
    with pytest.raises(DomainError):
        WeightedGraph([1.0, 1.0], [(0, 1, -1.0)])
    with pytest.raises(DomainError):
        WeightedGraph([1.0], [(0, 3, 1.0)])


@given(
    n=st.integers(1, 7),
    data=st.data(),
)
@settings(max_examples=40, deadline=None)
def test_constructed_graphs_always_validate(n, data):
    pairs = [(x, y) for x in range(n) for y in range(x + 1, n)]
    chosen = data.draw(st.lists(st.sampled_from(pairs), unique=True) if pairs else st.just([]))
    weights = data.draw(st.lists(st.floats(0.01, 10), min_size=len(chosen), max_size=len(chosen)))
    m = data.draw(st.lists(st.floats(1e-6, 1e3), min_size=n, max_size=n))
    g = WeightedGraph(m, [(u, v, w) for (u, v), w in zip(chosen, weights)])
    assert validate_graph(g) == []
    prov = FiniteGraphProvider(g)
    for x in g.vertices():
        for y, w in prov.neighbors(x):
            assert (x, w) in list(prov.neighbors(y))
            assert g.weight(x, y) == w
        assert prov.measure(x) == g.measure(x)
    # round trip: the provider reproduces exactly the stored adjacency
    rebuilt = {}
    for x in g.vertices():
        for y, w in prov.neighbors(x):
            rebuilt[(min(x, y), max(x, y))] = w
    assert rebuilt == g.edges()


def _star():
    return WeightedGraph([1.0] * 6, [(0, k, 1.0) for k in range(1, 5)])


def test_vertex_degree():
    g = _star()
    assert vertex_degree(g, 0) == 4
    assert vertex_degree(g, 5) == 0
    path = WeightedGraph([1.0] * 5, [(k, k + 1, 1.0) for k in range(4)])
    assert vertex_degree(path, 2) == 2
    assert vertex_degree(FiniteGraphProvider(path), 2) == 2
    with pytest.raises(DomainError):
        vertex_degree(g, 17)


def test_form_bound_constant():
    path = WeightedGraph([1.0] * 5, [(k, k + 1, 1.0) for k in range(4)])
    assert form_bound_constant(path) == 2
    assert form_bound_constant(WeightedGraph([1.0, 3.0], [(0, 1, 3.0)])) == 3
    assert form_bound_constant(WeightedGraph([0.5, 0.5], [(0, 1, 1.0)])) == 2
    with pytest.raises(DomainError):
        form_bound_constant(WeightedGraph([], []))


def test_tiny_measure_rate_overflow():
    g = WeightedGraph([1e-320, 1.0], [(0, 1, 1e300)])
    with pytest.raises(NumericError):
        jump_rate(g, 0)
    assert math.isinf(form_bound_constant(g))


def test_labels_and_raw_builder():
    g = graph_from_raw([("a", 1.0), ("b", 2.0)], [("a", "b", 0.5)])
    assert g.labels == ("a", "b")
    assert g.index_of("b") == 1
    assert g.weight(1, 0) == 0.5
    with pytest.raises(DomainError):
        graph_from_raw([("a", 1.0)], [("a", "zz", 1.0)])


def test_lazy_providers_are_symmetric():
    lat = IntegerLatticeProvider(dim=2)
    x = (3, -1)
    for y, w in lat.neighbors(x):
        assert (x, w) in lat.neighbors(y)
    chain = GeometricChainProvider(2.0)
    for k in range(5):
        for j, w in chain.neighbors(k):
            assert (k, w) in chain.neighbors(j)
    assert chain.measure(3) == 1.0
    assert vertex_degree(chain, 3) == 4.0 + 8.0
