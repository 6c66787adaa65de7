import itertools
from fractions import Fraction

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trimspec.hamiltonian import assemble
from trimspec.lattice import (
    BoxRegion,
    TrimPattern,
    boundary,
    check_relatively_dense,
    diameter,
    enumerate_box,
    graph_distance,
    k_star,
)


@pytest.mark.parametrize("K, expected", [(3, 3), (2, 3), (1, 1), (4, 5), (7, 7)])
def test_k_star(K, expected):
    assert k_star(K) == expected


@pytest.mark.parametrize("bad", [0, -1, 2.5])
def test_k_star_rejects_invalid(bad):
    with pytest.raises(ValueError):
        k_star(bad)


def test_enumerate_closed_and_open():
    closed = enumerate_box(BoxRegion.cube(1, 2))
    assert closed[:, 0].tolist() == [-1, 0, 1]
    opened = enumerate_box(BoxRegion.cube(1, 2, open=True))
    assert opened[:, 0].tolist() == [0]
    assert len(enumerate_box(BoxRegion.cube(2, 3))) == 9


def test_enumerate_is_lexicographic():
    sites = enumerate_box(BoxRegion((1, -2), 2))
    assert [tuple(s) for s in sites.tolist()] == sorted(tuple(s) for s in sites.tolist())
    assert tuple(sites[0]) == (0, -3)


def test_fractional_side_follows_definition():
    b = BoxRegion.cube(1, Fraction(5, 2))
    assert enumerate_box(b)[:, 0].tolist() == [-1, 0, 1]
    assert len(BoxRegion.cube(1, "1/2")) == 1


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 9), st.integers(1, 3), st.lists(st.integers(-5, 5), min_size=3, max_size=3))
def test_closed_box_cardinality(K, d, c):
    b = BoxRegion(tuple(c[:d]), K)
    assert len(enumerate_box(b)) == k_star(K) ** d == len(b)


@settings(max_examples=60, deadline=None)
@given(st.fractions(min_value=Fraction(1, 4), max_value=12, max_denominator=6), st.integers(1, 2))
def test_closed_equals_open_iff_not_even(L, d):
    closed = enumerate_box(BoxRegion.cube(d, L))
    opened = enumerate_box(BoxRegion.cube(d, L, open=True))
    even = L.denominator == 1 and L.numerator % 2 == 0
    assert (closed.shape == opened.shape and np.array_equal(closed, opened)) == (not even)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 7), st.integers(1, 3))
def test_index_of_inverts_enumeration(L, d):
    b = BoxRegion(tuple(range(d)), L)
    sites = enumerate_box(b)
    assert np.array_equal(b.index_of(sites), np.arange(len(sites)))
    far = sites[:1] + 100
    assert b.index_of(far)[0] == -1


@pytest.mark.parametrize(
    "gamma, K, Q, ok",
    [
        (TrimPattern.sublattice(2, 1), 2, 1, True),
        (TrimPattern.sublattice(2, 1), 2, 2, False),
        (TrimPattern.everything(2), 1, 1, True),
    ],
)
def test_relatively_dense_examples(gamma, K, Q, ok):
    res = check_relatively_dense(gamma, K, Q)
    assert res.ok is ok and res.exact


@pytest.mark.parametrize("K", range(1, 7))
@pytest.mark.parametrize("d", [1, 2])
def test_sublattice_is_dense(K, d):
    assert check_relatively_dense(TrimPattern.sublattice(K, d), K, 1).ok


def test_relatively_dense_other_period():
    # 3Z meets every open 4-cell (3 sites) but not every open 2-cell (1 site)
    g = TrimPattern.sublattice(3, 1)
    assert check_relatively_dense(g, 4, 1).ok
    res = check_relatively_dense(g, 2, 1)
    assert not res.ok and res.violation == (2,)


def test_relatively_dense_explicit_is_window_local():
    g = TrimPattern.explicit([(x,) for x in range(-10, 11, 2)], 1)
    res = check_relatively_dense(g, 2, 1, BoxRegion.cube(1, 20))
    assert res.ok and not res.exact
    res = check_relatively_dense(g, 2, 1, BoxRegion.cube(1, 40))
    assert not res.ok
    with pytest.raises(ValueError):
        check_relatively_dense(g, 2, 1)


def test_trim_pattern_roundtrip():
    g = TrimPattern(2, 3, frozenset({(0, 1), (2, 2)}), 2)
    assert TrimPattern.loads(g.dumps()) == g
    with pytest.raises(ValueError):
        TrimPattern(1, 2, frozenset({(3,)}))
    with pytest.raises(ValueError):
        TrimPattern.from_dict({"dim": 1, "sites": []})


def test_trim_pattern_membership():
    g = TrimPattern.sublattice(3, 2)
    assert (3, -6) in g and (1, 0) not in g
    assert g.contains([[0, 0], [0, 1]]).tolist() == [True, False]


def test_boundary_examples():
    b = boundary({(0,)}, 1)
    assert b.size == 2 and b.eta[(0,)] == 2
    b = boundary({(0,), (1,)}, 1)
    assert b.size == 2
    assert b.outer == {(-1,), (2,)}


def _form(A, d):
    """⟨χ_A, -Δ χ_A⟩ on a box strictly containing A and its outer boundary."""
    pts = np.array(sorted(A))
    r = int(np.abs(pts).max()) + 2
    op = assemble(BoxRegion.cube(d, 2 * r))
    chi = op.indicator(A)
    return float(chi @ (op.matrix @ chi))


@settings(max_examples=80, deadline=None)
@given(st.integers(1, 3), st.sets(st.tuples(st.integers(-3, 3), st.integers(-3, 3), st.integers(-3, 3)), min_size=1, max_size=12))
def test_boundary_invariants(d, raw):
    A = {p[:d] for p in raw}
    b = boundary(A, d)
    assert b.size == sum(b.eta.values())
    assert b.inner == {x for x, n in b.eta.items() if n >= 1}
    assert all(y not in A for y in b.outer)
    assert b.size == _form(A, d)


def test_graph_distance_examples():
    box = BoxRegion.cube(2, 9)
    assert graph_distance(box, (0, 0), (1, 2)) == 3
    assert graph_distance(box, (1, 1), (1, 1)) == 0
    assert diameter(BoxRegion.cube(1, 3)) == 2


def test_graph_distance_errors():
    with pytest.raises(ValueError):
        graph_distance({(0,), (2,)}, (0,), (2,))
    with pytest.raises(ValueError):
        graph_distance({(0,), (1,)}, (0,), (5,))
    with pytest.raises(ValueError):
        diameter({(0,), (2,)})


@pytest.mark.parametrize("d, L", [(1, 4), (2, 3), (2, 4), (3, 2)])
def test_graph_distance_on_box_is_l1(d, L):
    box = BoxRegion.cube(d, L)
    sites = [tuple(s) for s in enumerate_box(box).tolist()]
    for x, y in itertools.combinations(sites, 2):
        assert graph_distance(box, x, y) == sum(abs(a - b) for a, b in zip(x, y))
    assert diameter(box) <= d * L


@settings(max_examples=40, deadline=None)
@given(st.sets(st.tuples(st.integers(0, 4), st.integers(0, 4)), min_size=2, max_size=20))
def test_graph_distance_matches_networkx(B):
    G = nx.Graph()
    G.add_nodes_from(B)
    for x in B:
        for e in ((1, 0), (0, 1)):
            y = (x[0] + e[0], x[1] + e[1])
            if y in B:
                G.add_edge(x, y)
    x, y = sorted(B)[0], sorted(B)[-1]
    if nx.is_connected(G):
        assert graph_distance(B, x, y) == nx.shortest_path_length(G, x, y)
        assert graph_distance(B, x, y) >= sum(abs(a - b) for a, b in zip(x, y))
        assert diameter(B) == nx.diameter(G)
    else:
        with pytest.raises(ValueError):
            diameter(B)
