import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cuspwalk.census import BallCensus
from cuspwalk.cusped_graph import (
    CuspedGraph, DifferentHoroball, Vertex, VertexNotInBall, build_ball, busemann_proxy,
    estimate_delta, export_ball, graph_distance, gromov_product, horoball_pairs, import_ball,
)
from cuspwalk.group_model import BudgetExceeded, make_group

F2 = make_group("f2-rel-z")
Z2 = make_group("z2-free-z")
G_F2 = CuspedGraph(F2, 2)
G_Z2 = CuspedGraph(Z2, 2)
O = Vertex((), 0)


def av(k, n):
    return Vertex(F2.h_element((k,)), n)


@pytest.fixture(scope="module")
def ball6():
    return build_ball(G_F2, O, 6)


@pytest.fixture(scope="module")
def ball3_z2():
    return build_ball(G_Z2, O, 3)


def vertices(group, max_word=6, max_depth=5):
    gens = st.lists(st.sampled_from(group.generators), max_size=max_word)

    def make(gs, n):
        g = group.identity
        for s in gs:
            g = group.mul(g, s)
        return Vertex(g, n)
    return st.builds(make, gens, st.integers(0, max_depth))


# -- build_ball --------------------------------------------------------------

def test_trivial_ball():
    b = build_ball(G_F2, O, 0, 0)
    assert len(b) == 1 and b.edges() == []


def test_neighbors_of_origin():
    nb = set(G_F2.neighbors(O))
    cayley = {Vertex(s, 0) for s in F2.generators}
    up = {av(k, 1) for k in range(-2, 3)}
    assert nb == cayley | up
    assert len(nb) == 9


def test_neighbors_depth_one():
    nb = G_F2.neighbors(av(0, 1))
    by_depth = Counter(v.depth for v in nb)
    assert set(nb) >= {av(k, 1) for k in (-2, -1, 1, 2)}
    assert by_depth == {0: 5, 1: 4, 2: 9}
    assert {v for v in nb if v.depth == 2} == {av(k, 2) for k in range(-4, 5)}


@pytest.mark.parametrize("ball_name", ["ball6", "ball3_z2"])
def test_ball_symmetric_and_rule_conformant(ball_name, request):
    ball = request.getfixturevalue(ball_name)
    graph = G_F2 if ball_name == "ball6" else G_Z2
    for v, nb in ball.adjacency.items():
        for w in nb:
            assert v in ball.adjacency[w]
            assert graph.edge_rule(v, w) in (1, 2, 3)
        assert len(set(nb)) == len(nb)
        assert v not in nb


def test_rule_regeneration_random_edges():
    # regenerate edges from the rules directly: (g, n) ~ (g h, n') iff ...
    rng = np.random.default_rng(3)
    for _ in range(1000):
        n = int(rng.integers(0, 6))
        v = Vertex(F2.parse("b" * int(rng.integers(0, 3))), n)
        nb = G_F2.neighbors(v)
        w = nb[int(rng.integers(len(nb)))]
        diff = F2.mul(F2.inverse(v.element), w.element)
        if v.depth == w.depth == 0 and F2.word_length(diff) == 1:
            continue
        k = 0 if not diff else diff[0][1][0]
        assert len(diff) <= 1 and (not diff or diff[0][0] == 0)
        if v.depth == w.depth:
            assert 1 <= abs(k) <= 2**v.depth
        else:
            assert abs(v.depth - w.depth) == 1 and abs(k) <= 2 ** max(v.depth, w.depth)


def test_ball_budget():
    with pytest.raises(BudgetExceeded):
        build_ball(G_F2, O, 6, budget=500)


def test_margin_does_not_change_inner_distances():
    b0 = build_ball(G_F2, O, 3, 0)
    b2 = build_ball(G_F2, O, 3, 2)
    for v in b0.inner():
        assert b0.dist_from_center[v] == b2.dist_from_center[v]


# -- distances ---------------------------------------------------------------

def test_distance_examples(ball6):
    assert G_F2.distance(O, Vertex((), 3)) == 3
    assert G_F2.distance(O, Vertex(F2.parse("a"), 0)) == 1
    # BFS oracle
    assert graph_distance(O, Vertex((), 3), ball6) == 3
    assert graph_distance(O, av(8, 0), ball6) == 4
    assert G_F2.distance(O, av(8, 0)) == 4
    assert G_F2.horoball_distance_oracle(O, av(8, 0)) == 7


def test_graph_distance_path_is_geodesic(ball6):
    d, path = graph_distance(O, av(8, 0), ball6, with_path=True)
    assert len(path) == d + 1
    assert all(G_F2.edge_rule(u, v) for u, v in zip(path, path[1:]))


def test_vertex_not_in_ball(ball6):
    with pytest.raises(VertexNotInBall):
        graph_distance(O, Vertex((), 9), ball6)


@pytest.mark.parametrize("ball_name,graph", [("ball6", G_F2), ("ball3_z2", G_Z2)])
def test_structural_distance_matches_bfs_from_center(ball_name, graph, request):
    ball = request.getfixturevalue(ball_name)
    for v, d in ball.dist_from_center.items():
        assert graph.distance(O, v) == d


def test_structural_distance_matches_bfs_pairs(ball6):
    inner = [v for v, d in ball6.dist_from_center.items() if d <= 2]
    rng = np.random.default_rng(0)
    for _ in range(150):
        u, v = (inner[i] for i in rng.integers(len(inner), size=2))
        if G_F2.distance(u, v) <= 4:
            assert graph_distance(u, v, ball6) == G_F2.distance(u, v)


@settings(max_examples=200, deadline=None)
@given(vertices(F2), vertices(F2), vertices(F2))
def test_metric_axioms(x, y, z):
    d = G_F2.distance
    assert d(x, y) == d(y, x)
    assert (d(x, y) == 0) == (x == y)
    assert d(x, z) <= d(x, y) + d(y, z)


@settings(max_examples=100, deadline=None)
@given(vertices(Z2, 4, 4), vertices(Z2, 4, 4), vertices(Z2, 4, 4))
def test_metric_axioms_z2(x, y, z):
    d = G_Z2.distance
    assert d(x, y) == d(y, x)
    assert d(x, z) <= d(x, y) + d(y, z)


@settings(max_examples=200, deadline=None)
@given(vertices(F2), vertices(F2), st.lists(st.sampled_from(F2.generators), max_size=6))
def test_distance_translation_invariant(x, y, gs):
    g = F2.identity
    for s in gs:
        g = F2.mul(g, s)
    gx, gy = Vertex(F2.mul(g, x.element), x.depth), Vertex(F2.mul(g, y.element), y.depth)
    assert G_F2.distance(gx, gy) == G_F2.distance(x, y)


@settings(max_examples=200, deadline=None)
@given(vertices(F2, 8, 7), vertices(F2, 8, 7))
def test_geodesic_valid(x, y):
    path = G_F2.geodesic(x, y)
    assert path[0] == x and path[-1] == y
    assert len(path) == G_F2.distance(x, y) + 1
    assert all(G_F2.edge_rule(u, v) for u, v in zip(path, path[1:]))


@settings(max_examples=100, deadline=None)
@given(vertices(Z2, 4, 4), vertices(Z2, 4, 4))
def test_geodesic_valid_z2(x, y):
    path = G_Z2.geodesic(x, y)
    assert path[0] == x and path[-1] == y
    assert len(path) == G_Z2.distance(x, y) + 1
    assert all(G_Z2.edge_rule(u, v) for u, v in zip(path, path[1:]))


def test_piece_distance_array_matches_scalar():
    for graph in (G_F2, G_Z2):
        deltas = np.arange(0, 300)
        for n1 in range(5):
            for n2 in range(5):
                arr = graph.piece_distance_array(n1, n2, deltas)
                assert [int(x) for x in arr] == [graph.piece_distance(n1, n2, int(d)) for d in deltas]


def test_preferred_path_bounds():
    for k in range(1, 2000, 7):
        d = G_F2.distance(O, av(k, 0))
        L = math.ceil(math.log2(k)) if k > 1 else 0
        assert L - 1 <= d <= 2 * L + 1
        assert d <= G_F2.horoball_distance_oracle(O, av(k, 0))


# -- preferred-path oracle ----------------------------------------------------

def test_horoball_oracle_examples():
    assert G_F2.horoball_distance_oracle(av(0, 1), av(0, 4)) == 3
    assert G_F2.horoball_distance_oracle(O, av(8, 0)) == 7
    assert G_F2.horoball_distance_oracle(av(0, 2), av(2, 2)) == 1
    assert G_F2.distance(av(0, 2), av(2, 2)) == 1


def test_horoball_oracle_different_horoballs():
    with pytest.raises(DifferentHoroball):
        G_F2.horoball_distance_oracle(av(0, 1), Vertex(F2.parse("b"), 1))


def test_preferred_path_additive_gap():
    gaps = [G_F2.horoball_distance_oracle(av(0, n), av(k, m)) - G_F2.distance(av(0, n), av(k, m))
            for n in range(4) for m in range(4) for k in range(0, 300, 5)]
    assert min(gaps) >= 0 and max(gaps) <= 6


# -- Gromov products, Busemann proxies, hyperbolicity --------------------------

@settings(max_examples=100, deadline=None)
@given(vertices(F2), vertices(F2), vertices(F2))
def test_gromov_product(u, v, w):
    d = G_F2.distance
    assert gromov_product(u, v, u, d) == 0
    assert gromov_product(u, u, w, d) == d(u, w)
    assert gromov_product(u, v, w, d) >= 0
    assert gromov_product(u, v, w, d) == 0.5 * (d(w, u) + d(w, v) - d(u, v))


def test_gromov_product_bfs(ball6):
    x, y = Vertex((), 3), av(8, 3)
    bfs = lambda a, b: graph_distance(a, b, ball6)
    assert gromov_product(x, y, O, bfs) == gromov_product(x, y, O, G_F2.distance)


@settings(max_examples=100, deadline=None)
@given(vertices(F2), vertices(F2), vertices(F2, 10, 8))
def test_busemann_proxy(x, y, z):
    d = G_F2.distance
    assert busemann_proxy(x, x, z, d) == 0
    assert abs(busemann_proxy(x, y, z, d)) <= d(x, y)
    assert busemann_proxy(x, y, z, d) + busemann_proxy(y, x, z, d) == 0


def test_busemann_on_geodesic():
    z = Vertex(F2.parse("b^5a^3b^2"), 0)
    geo = G_F2.geodesic(O, z)
    x, y = geo[0], geo[3]
    assert busemann_proxy(x, y, z, G_F2.distance) == G_F2.distance(x, y)


def test_delta_tree_is_zero():
    ball = sorted(F2.word_ball(3))
    est = estimate_delta(ball, lambda g, h: F2.word_length(F2.mul(F2.inverse(g), h)), 2000, 0)
    assert est.delta_hat == 0


def test_delta_deterministic_and_monotone(ball6):
    verts = ball6.inner()[:400]
    a = estimate_delta(verts, G_F2.distance, 500, 7)
    b = estimate_delta(verts, G_F2.distance, 500, 7)
    c = estimate_delta(verts, G_F2.distance, 250, 7)
    assert a.delta_hat == b.delta_hat >= c.delta_hat >= 0


# -- census and export ----------------------------------------------------------

@pytest.mark.parametrize("ball_name,graph,R", [("ball6", G_F2, 6), ("ball3_z2", G_Z2, 3)])
def test_census_matches_bfs(ball_name, graph, R, request):
    ball = request.getfixturevalue(ball_name)
    cen = BallCensus(graph, R)
    layers = Counter(ball.dist_from_center.values())
    orbit = Counter(d for v, d in ball.dist_from_center.items() if v.depth == 0)
    assert [layers[d] for d in range(R + 1)] == cen.vertices
    assert [orbit[d] for d in range(R + 1)] == cen.orbit


def test_census_sampler_distances():
    cen = BallCensus(G_F2, 10)
    pts = cen.sample_ball(300, 0)
    assert all(G_F2.distance(O, v) <= 10 for v in pts)
    assert cen.sample_ball(50, 4) == cen.sample_ball(50, 4)


def test_export_import_round_trip():
    ball = build_ball(G_F2, O, 3)
    text = export_ball(ball, F2)
    verts, edges = import_ball(text, F2)
    assert verts == ball.vertices
    assert sorted((verts[i], verts[j]) for i, j in edges) == sorted(ball.edges())
    assert export_ball(ball, F2) == text


# -- preferred paths --------------------------------------------------------------

@pytest.mark.parametrize("gname", ["f2", "z2"])
def test_preferred_path_is_edge_path(gname, request):
    group = request.getfixturevalue(gname)
    X = CuspedGraph(group, 2)
    for u, v in horoball_pairs(group, 500, 60, 1):
        P = X.preferred_path(u, v)
        assert P[0] == u and P[-1] == v
        assert all(X.edge_rule(a, b) is not None for a, b in zip(P, P[1:]))
        assert len(P) - 1 == X.horoball_distance_oracle(u, v)


def test_preferred_path_constant_scale_free(graph, f2):
    """Bounded distance and bounded length excess, with no growth in the offset scale."""
    consts = [graph.preferred_path_constants(horoball_pairs(f2, span, 100, 3))
              for span in (10, 10**3, 10**6)]
    assert all(c["hausdorff"] <= 3 and c["length_excess"] <= 6 for c in consts)
    assert consts[-1] == consts[1]


def test_preferred_path_needs_same_horoball(graph, f2):
    with pytest.raises(DifferentHoroball):
        graph.preferred_path(Vertex((), 1), Vertex(f2.parse("b"), 1))
