import math

import numpy as np
import pytest

from cuspwalk.boundary_measures import (
    BoundaryMeasures, BoundarySample, DivergentSeries, InsufficientSpread, ProxiesTooClose,
    ShadowSpec, _check_spread, boundary_sample, coset_growth_census, cusp_normalization,
    epsilon_for, k_H, ols, ray_endpoint,
)
from cuspwalk.census import BallCensus
from cuspwalk.cusped_graph import Vertex

O = Vertex((), 0)
D_REF = 1.2572          # critical exponent of the reference chain (census fit, R = 30..60)


@pytest.fixture(scope="module")
def bm(lab):
    return BoundaryMeasures(lab, R_horizon=12, critical=D_REF, delta_X=1.0, delta_G=0.5, seed=3)


@pytest.fixture(scope="module")
def nu(bm):
    return bm.harmonic(3000, seed=17, first_index=0)


# -- helpers -----------------------------------------------------------------------

def test_epsilon_for():
    assert epsilon_for(1.0) == pytest.approx(0.2)
    assert epsilon_for(0.1) == 1.0
    assert epsilon_for(0.0) == 1.0


def test_ols_exact_line():
    slope, icpt, r2 = ols([0, 1, 2, 3], [1, 3, 5, 7])
    assert (slope, icpt, r2) == pytest.approx((2, 1, 1))
    with pytest.raises(InsufficientSpread):
        ols([0, 1], [0, 1])


def test_spread_check():
    with pytest.raises(InsufficientSpread):
        _check_spread([0.0, 1.0, 2.0])
    _check_spread([0.0, 1.2, 2.4])


@pytest.mark.parametrize("word", ["e", "b", "ab^-2", "a^3ba^-1", "b^2a^5"])
def test_ray_endpoint(graph, f2, word):
    g = f2.parse(word)
    end = ray_endpoint(graph, g, 15)
    assert end.depth == 0
    assert graph.distance(O, end) == 15
    d0 = graph.distance(O, Vertex(g, 0))
    assert d0 + graph.distance(Vertex(g, 0), end) == 15
    assert Vertex(g, 0) in graph.geodesic(O, end)


def test_ray_endpoint_too_far(graph, f2):
    with pytest.raises(ValueError):
        ray_endpoint(graph, f2.parse("b^20"), 15)


def test_k_H(lab):
    assert k_H(lab, O) == 0
    assert k_H(lab, Vertex((), 3)) == pytest.approx(math.log(17))


def test_cusp_normalization_bounded(lab):
    rep = cusp_normalization(lab, range(1, 11))
    vals = np.array(rep["values"])
    assert np.all(np.isfinite(vals))
    assert vals.max() - vals.min() < 1.0


# -- harmonic measure ------------------------------------------------------------------

def test_harmonic_weights_sum_to_one(bm, nu, graph):
    assert len(nu) == 3000
    assert nu.total == pytest.approx(1.0, abs=1e-12)
    dist = np.array([graph.distance(O, v) for v in nu.proxies[:200]])
    assert np.all(dist == 12)


def test_harmonic_single_atom(bm):
    one = bm.harmonic(1, seed=1, first_index=0)
    assert len(one) == 1 and one.weights[0] == 1.0


def test_harmonic_deterministic(bm):
    a = bm.harmonic(50, seed=5, first_index=100)
    b = bm.harmonic(50, seed=5, first_index=100)
    assert a.proxies == b.proxies


def test_trivial_shadow(bm, nu):
    assert bm.measure_of_shadow(nu, ShadowSpec(O, O, 1.0)) == pytest.approx(1.0)


def test_shadow_monotone_in_radius(bm, nu, f2):
    y = Vertex(f2.parse("ba^2"), 1)
    vals = [bm.measure_of_shadow(nu, ShadowSpec(O, y, r, "graph")) for r in (0, 1, 2, 3, 5)]
    assert all(a <= b for a, b in zip(vals, vals[1:]))


def test_ball_measure_monotone_in_level(bm, nu):
    xi = nu.proxies[0]
    vals = [bm.ball_measure(nu, xi, t, "graph") for t in range(0, 12)]
    assert vals[0] == pytest.approx(1.0)
    assert all(a >= b for a, b in zip(vals, vals[1:]))


def test_proxies_too_close(bm, nu, f2):
    far = Vertex(f2.parse("b^7"), 0)
    with pytest.raises(ProxiesTooClose):
        bm.in_shadow(nu, ShadowSpec(O, far, 1.0, "graph"))


def test_shadow_spec_metric():
    with pytest.raises(ValueError):
        ShadowSpec(O, O, 1.0, "euclid")


def test_harmonicity_of_reweighting(bm, chain, f2):
    """Reweighted samples from a pivot y estimate nu_e: total mass ~ 1."""
    for y in (Vertex(f2.parse("b"), 0), Vertex(f2.h_element((2,)), 1)):
        ps = bm.harmonic(3000, pivot=y, seed=23, first_index=0)
        w = ps.weights * len(ps.weights)
        se = w.std(ddof=1) / math.sqrt(len(w))
        assert abs(ps.total - 1.0) < 4 * se + 1e-3


def test_importance_matches_direct(bm, nu, f2):
    """Shadow of a vertex at distance 4: pivot sampling agrees with plain Monte Carlo."""
    y = Vertex(f2.parse("b^2a"), 1)
    spec = ShadowSpec(O, y, 2.0, "graph")
    direct = bm.measure_of_shadow(nu, spec)
    se_direct = math.sqrt(direct * (1 - direct) / len(nu))
    ps = bm.harmonic(3000, pivot=y, seed=29, first_index=0)
    inside = bm.in_shadow(ps, spec)
    w = ps.weights * inside * len(ps.weights)
    est = float(ps.weights[inside].sum())
    se_imp = w.std(ddof=1) / math.sqrt(len(w))
    assert direct > 0.01
    assert abs(est - direct) < 4 * math.hypot(se_direct, se_imp)


# -- Patterson-Sullivan measure -------------------------------------------------------

def test_ps_radius_law(bm):
    s = D_REF + 0.3
    law = bm.ps_radius_law(s)
    cen = BallCensus(bm.graph, 12)
    expected = np.array([cen.orbit[n] * math.exp(-s * n) for n in range(13)])
    assert law == pytest.approx(expected / expected.sum(), rel=1e-12)


def test_ps_from_origin(bm, graph):
    s = D_REF + 0.3
    ps = bm.ps(2000, s, seed=4)
    assert ps.total == pytest.approx(1.0)
    assert np.all(ps.weights == 1 / 2000)
    assert all(v.depth == 0 and graph.distance(O, v) == 12 for v in ps.proxies[:100])
    # the exact density of each sampled point sums to at most one
    assert np.all(ps.density > 0)


def test_ps_divergent(bm):
    with pytest.raises(DivergentSeries):
        bm.ps(10, D_REF - 0.1)


def test_ps_pivot_must_be_orbit_point(bm):
    with pytest.raises(ValueError):
        bm.ps(10, D_REF + 0.3, pivot=Vertex((), 2))


def test_ps_importance_matches_direct(bm, f2):
    s = D_REF + 0.3
    y = Vertex(f2.parse("ab^2"), 0)
    spec = ShadowSpec(O, y, 2.0, "graph")
    direct_ps = bm.ps(6000, s, seed=8)
    direct = bm.measure_of_shadow(direct_ps, spec)
    piv = bm.ps(3000, s, pivot=y, seed=9)
    inside = bm.in_shadow(piv, spec)
    w = piv.weights * inside * len(piv)
    se_imp = w.std(ddof=1) / math.sqrt(len(w))
    se_dir = math.sqrt(direct * (1 - direct) / len(direct_ps))
    est = float(piv.weights[inside].sum())
    assert abs(est - direct) < 4 * math.hypot(se_dir, se_imp)


def test_boundary_sample_api(lab):
    out = boundary_sample(lab, R_horizon=10, M=20, seed=2)
    assert len(out) == 20 and all(isinstance(b, BoundarySample) for b in out)
    assert sum(b.weight for b in out) == pytest.approx(1.0)
    ps = boundary_sample(lab, R_horizon=10, M=20, kind="ps", s=2.0, critical=D_REF)
    assert all(b.density is not None for b in ps)
    with pytest.raises(ValueError):
        boundary_sample(lab, R_horizon=10, M=5, kind="ps")
    with pytest.raises(ValueError):
        boundary_sample(lab, origin=Vertex((), 1))


# -- regressions --------------------------------------------------------------------

def test_shadow_targets(bm, graph):
    ts = bm.shadow_targets(range(3, 7), per_distance=2, seed=1)
    assert [graph.distance(O, y) for y in ts] == [3, 3, 4, 4, 5, 5, 6, 6]


def test_pivot_on_geodesic(bm, nu):
    xi = nu.proxies[1]
    p = bm.pivot_on_geodesic(xi, 5, "graph")
    assert bm.graph.distance(O, p) == 5
    q = bm.pivot_on_geodesic(xi, 5, "graph", orbit_only=True)
    assert q.depth == 0 and bm.graph.distance(O, q) <= 5


def test_coset_growth_census_graph(lab):
    gc = coset_growth_census(lab, 12)
    cen = lab.census(12)
    assert sum(gc.orbit_counts) == cen.orbit_ball(11)
    assert gc.orbit_rate > 0 and gc.coset_rate > 0
