from __future__ import annotations

from fractions import Fraction

import networkx as nx
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from localbs import graph as G
from localbs.errors import GraphConstructionError, InputError


@st.composite
def connected_graphs(draw, max_n=9):
    """Random connected graphs: a random spanning tree plus random extra edges."""
    n = draw(st.integers(2, max_n))
    edges = set()
    for v in range(1, n):
        u = draw(st.integers(0, v - 1))
        edges.add((u, v))
    extra = draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=2 * n))
    edges |= {(min(a, b), max(a, b)) for a, b in extra if a != b}
    perm = draw(st.permutations(range(n)))
    return G.from_edges(n, [(perm[a], perm[b]) for a, b in edges])


class TestClosedNeighborhood:
    def test_cycle4(self):
        assert G.closed_neighborhood(G.cycle(4), 0) == {3, 0, 1}

    def test_complete3(self):
        assert G.closed_neighborhood(G.complete(3), 1) == {0, 1, 2}

    def test_path_middle(self):
        assert G.closed_neighborhood(G.path(3), 1) == {0, 1, 2}

    @pytest.mark.parametrize("v", [-1, 4, 2.5, "x"])
    def test_invalid_vertex(self, v):
        with pytest.raises(InputError):
            G.closed_neighborhood(G.cycle(4), v)


class TestBoundary:
    def test_cycle4(self):
        assert G.boundary(G.cycle(4), 0) == {1, 3}

    def test_cycle6(self):
        assert G.boundary(G.cycle(6), 0) == {1, 5}

    @pytest.mark.parametrize("n", [2, 3, 6])
    def test_complete_is_empty(self, n):
        g = G.complete(n)
        assert all(G.boundary(g, v) == frozenset() for v in range(n))

    def test_invalid_vertex(self):
        with pytest.raises(InputError):
            G.boundary(G.cycle(4), 9)


class TestMeasure:
    def test_cycle4_uniform(self):
        assert G.vertex_stationary_measure(G.cycle(4)).weights == (Fraction(1, 4),) * 4

    def test_path3(self):
        mu = G.vertex_stationary_measure(G.path(3))
        assert mu.denominator == 7
        assert mu.weights == (Fraction(2, 7), Fraction(3, 7), Fraction(2, 7))

    def test_star3(self):
        mu = G.vertex_stationary_measure(G.star(3))
        assert mu.weight(0) == Fraction(4, 10)
        assert all(mu.weight(v) == Fraction(2, 10) for v in (1, 2, 3))

    def test_walk_matrix_has_mu_as_fixed_point(self):
        g = G.star(5)
        P = G.walk_transition_matrix(g)
        mu = G.vertex_stationary_measure(g).as_array()
        assert np.allclose(mu @ P, mu, atol=1e-15)
        assert np.allclose(P.sum(axis=1), 1.0)


class TestBuilders:
    def test_cycle4_edges(self):
        assert set(G.cycle(4).edges()) == {(0, 1), (1, 2), (2, 3), (0, 3)}

    def test_edge_list_path(self):
        g = G.from_edge_list("0 1\n1 2")
        assert g.n == 3 and set(g.edges()) == {(0, 1), (1, 2)}

    def test_edge_list_comments_labels_duplicates(self):
        g = G.from_edge_list("# a triangle\nb c\nc a  # closing\n\na b\nb c\n")
        assert g.n == 3 and g.labels == ("b", "c", "a") and len(g.edges()) == 3

    def test_edge_list_integer_labels_sorted(self):
        g = G.from_edge_list("10 2\n2 7")
        assert g.labels == (2, 7, 10)
        assert set(g.edges()) == {(0, 1), (0, 2)}

    @pytest.mark.parametrize("text", ["0 0", "0 1 2", "", "0 1\n2 3"])
    def test_edge_list_rejects(self, text):
        with pytest.raises(GraphConstructionError):
            G.from_edge_list(text)

    def test_disconnected_named(self):
        with pytest.raises(GraphConstructionError, match="vertex 2"):
            G.from_edges(4, [(0, 1), (2, 3)])

    def test_asymmetric_rejected(self):
        with pytest.raises(GraphConstructionError, match="symmetric"):
            G.Graph([[1], []])

    def test_out_of_range_rejected(self):
        with pytest.raises(GraphConstructionError, match="out of range"):
            G.from_edges(2, [(0, 5)])

    @pytest.mark.parametrize("bad", [lambda: G.cycle(2), lambda: G.path(1), lambda: G.star(0),
                                     lambda: G.random_regular(5, 3, 0), lambda: G.random_regular(4, 4, 0)])
    def test_bad_parameters(self, bad):
        with pytest.raises(GraphConstructionError):
            bad()

    def test_random_regular_six_two_is_a_cycle(self):
        # 2-regular on 6 vertices is either C6 or two triangles; only C6 is connected
        for seed in range(20):
            g = G.random_regular(6, 2, seed)
            assert nx.is_isomorphic(nx.Graph(g.edges()), nx.cycle_graph(6))

    def test_random_regular_deterministic(self):
        a, b = G.random_regular(10, 3, 42), G.random_regular(10, 3, 42)
        assert a == b and a.regular_degree() == 3

    def test_parse_spec(self, tmp_path):
        f = tmp_path / "g.txt"
        f.write_text("0 1\n1 2\n2 0\n")
        assert G.parse_graph_spec("cycle:5") == G.cycle(5)
        assert G.parse_graph_spec("star:4") == G.star(4)
        assert G.parse_graph_spec(f"file:{f}") == G.complete(3)
        assert G.parse_graph_spec("regular:10:3:1").regular_degree() == 3
        for bad in ["wheel:5", "cycle", "cycle:x", "file:/nonexistent/path"]:
            with pytest.raises(InputError):
                G.parse_graph_spec(bad)

    def test_closed_arrays_read_only(self):
        g = G.cycle(5)
        with pytest.raises(ValueError):
            g.closed_idx[0] = 3


class TestProperties:
    @given(connected_graphs())
    def test_closed_neighborhood_contains_v(self, g):
        for v in range(g.n):
            a = G.closed_neighborhood(g, v)
            assert v in a and len(a) == g.degree(v) + 1

    @given(connected_graphs())
    def test_measure_positive_and_normalised(self, g):
        mu = G.vertex_stationary_measure(g)
        assert sum(mu.weights) == 1
        assert all(w > 0 for w in mu.weights)

    @given(connected_graphs())
    def test_boundary_subset_and_empty_iff_full(self, g):
        for v in range(g.n):
            bd = G.boundary(g, v)
            a = G.closed_neighborhood(g, v)
            assert bd <= a
            assert (bd == frozenset()) == (a == frozenset(range(g.n)))

    @given(connected_graphs())
    def test_symmetry(self, g):
        for v in range(g.n):
            for u in g.adjacency[v]:
                assert v in g.adjacency[u]
