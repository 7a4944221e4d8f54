import math
import random
from fractions import Fraction as F

import numpy as np
import pytest

from cuspwalk.cusped_graph import Vertex
from cuspwalk.green_series import GreenSeries, series_inv, series_mul
from cuspwalk.green_lab import (
    GreenLab, NonconvergentFit, SampleTooSmall, first_passage_propagation, fit_decay,
    nstep_distribution,
)

O = Vertex((), 0)


def av(f2, k, n):
    return Vertex(f2.h_element((k,)), n)


class _Within:
    """Vertex region B_X((e,0), R) for propagation, by the exact distance oracle."""

    def __init__(self, graph, R):
        self.graph, self.R = graph, R

    def __contains__(self, v):
        return self.graph.distance(O, v) <= self.R


@pytest.fixture(scope="module")
def long_series(chain):
    return GreenSeries(chain, horizon=256)


@pytest.fixture(scope="module")
def near_vertices(lab):
    return lab.census(4).sample_ball(40, 9, radius=4)


# -- propagation ------------------------------------------------------------------

def test_zero_steps(chain):
    d = nstep_distribution(chain, O, 0)
    assert d.weights == {O: 1} and not d.truncated


def test_two_step_return(chain):
    d = nstep_distribution(chain, O, 2, exact=True)
    assert d[O] == F(7, 80)
    assert d[O] == 4 * F(1, 8) ** 2 + 5 * F(1, 10) * F(1, 20)


def test_mass_conserved_without_truncation(chain):
    d = nstep_distribution(chain, O, 3, region=_Within(chain.graph, 10), exact=True)
    assert d.mass() == 1 and not d.truncated


def test_truncated_mass_accounted(chain):
    d = nstep_distribution(chain, O, 3, region=_Within(chain.graph, 1), exact=True)
    assert d.truncated and d.mass() + d.lost == 1


def test_chapman_kolmogorov(chain):
    p3 = nstep_distribution(chain, O, 3, exact=True)
    p1 = nstep_distribution(chain, O, 1, exact=True)
    comp = {}
    for z, w in p1.weights.items():
        for y, v in nstep_distribution(chain, z, 2, exact=True).weights.items():
            comp[y] = comp.get(y, 0) + w * v
    assert comp == p3.weights


def test_termwise_detailed_balance(chain, f2):
    x = O
    for y in (av(f2, 3, 1), Vertex(f2.parse("ba"), 0), Vertex((), 2)):
        n = 4
        fx = nstep_distribution(chain, x, n, exact=True)[y]
        fy = nstep_distribution(chain, y, n, exact=True)[x]
        assert chain.m_weight(x) * fx == chain.m_weight(y) * fy


def test_series_matches_propagation(lab, chain, f2):
    dist = [nstep_distribution(chain, O, n, exact=False) for n in range(9)]
    s = lab.series(64)
    targets = [O, av(f2, 1, 1), av(f2, 3, 2), Vertex(f2.parse("b"), 0),
               Vertex(f2.parse("ab^-1a^2"), 1), Vertex((), 3)]
    for y in targets:
        ser = s.series(O, y)
        for n in range(9):
            assert ser[n] == pytest.approx(dist[n][y], rel=1e-9, abs=1e-15)


def test_node_series_is_node_sum(lab, chain, f2):
    s = lab.series(64)
    y = av(f2, 2, 2)
    d6 = nstep_distribution(chain, O, 6, exact=False)
    expected = sum(d6[w] for w in chain.m_node(y))
    assert s.node_series(O, y)[6] == pytest.approx(expected, rel=1e-9)


# -- Green function ------------------------------------------------------------

def test_green_truncated_zero(lab):
    assert lab.green_truncated(O, O, 0).partial == pytest.approx(1.0)


def test_green_partial_monotone_and_tail(lab, f2):
    y = av(f2, 5, 2)
    parts = [lab.green_truncated(O, y, N) for N in (10, 20, 40, 60)]
    assert all(a.partial <= b.partial for a, b in zip(parts, parts[1:]))
    assert all(p.tail_bound >= 0 for p in parts)
    assert all(p.partial <= lab.green(O, y) for p in parts)
    # every later increment p^(k)(x,y), k > N, stays below the fitted tail
    ser = lab.series(64).series(O, y)
    for p in parts:
        assert ser[p.N + 1:].max() <= p.tail_bound


def test_green_needs_fit(chain):
    with pytest.raises(NonconvergentFit):
        GreenLab(chain).green_truncated(O, O, 4)


def test_green_partial_symmetry(lab, chain, near_vertices):
    m = chain.m_weight
    s = lab.series(64)
    for y in near_vertices[:20]:
        if y == O:
            continue
        a = s.series(O, y)[:41].sum() / float(m(y))
        b = s.series(y, O)[:41].sum() / float(m(O))
        assert a == pytest.approx(b, rel=1e-8)


def test_full_green_symmetry(lab, chain, near_vertices):
    m = chain.m_float
    for y in near_vertices:
        a = lab.log_green(O, y) - math.log(m[y.depth])
        b = lab.log_green(y, O) - math.log(m[0])
        assert a == pytest.approx(b, abs=1e-8)


def test_full_green_matches_series_sum(lab, long_series, f2):
    """Independent routes: Fourier/Thomas solve vs the time series summed to 256 steps."""
    for y in (O, av(f2, 2, 1), Vertex(f2.parse("b^2"), 0), Vertex((), 4)):
        partial = long_series.series(O, y).sum()
        assert partial <= lab.green(O, y) * (1 + 1e-6)
        assert lab.green(O, y) == pytest.approx(partial, rel=1e-3)


@pytest.mark.parametrize("n", range(2, 9))
def test_cusp_ratio(lab, n):
    g0 = lab.green(Vertex((), n), O)
    g1 = lab.green(Vertex((), n + 1), O)
    assert 0.5 * 0.75 <= g1 / g0 <= 0.5 * 1.25


def test_cusp_decay_helper(lab):
    rows = lab.cusp_decay(range(3, 9))
    assert [r[0] for r in rows] == list(range(3, 9))
    assert all(0.375 <= r[2] <= 0.625 for r in rows)


# -- Green metric ------------------------------------------------------------------

def test_green_metric_axioms(lab, near_vertices):
    rho = lab.green_metric
    assert rho(O, O) == 0
    for y in near_vertices:
        if y != O:
            assert rho(O, y) > 0
            assert rho(O, y) == pytest.approx(rho(y, O), abs=1e-8)


def test_green_metric_triangle(lab):
    cen = lab.census(5)
    pts = cen.sample_ball(1500, 21, radius=5)
    rho = lab.green_metric
    worst = min(rho(x, y) + rho(y, z) - rho(x, z)
                for x, y, z in zip(pts[::3], pts[1::3], pts[2::3]))
    assert worst >= -1e-2


def test_green_value_fields(lab, f2):
    gv = lab.green_value(O, av(f2, 2, 1))
    assert gv.rho_G == pytest.approx(lab.green_metric(O, av(f2, 2, 1)))
    assert gv.N == 4 * lab.graph.distance(O, av(f2, 2, 1)) + 40
    assert gv.relative_tail < 1


def test_quasi_isometry_small(lab):
    qi = lab.quasi_isometry(count=60, seed=3)
    assert 1 <= qi["K"] <= qi["K_doubled"] < 10
    assert qi["min_ratio"] > 0


# -- spectral radius ---------------------------------------------------------------

def test_spectral_fit(lab):
    fit = lab.spectral
    assert fit.delta_hat < 1 and fit.monotone and fit.r2 >= 0.95


def test_spectral_two_base_points(lab):
    a = lab.spectral_radius_estimate(O, 20)
    b = lab.spectral_radius_estimate(Vertex((), 1), 20)
    assert abs(a.delta_hat - b.delta_hat) < 0.1 * a.delta_hat


def test_fit_decay_synthetic():
    two_n = np.arange(2, 21, 2)
    fit = fit_decay(two_n, 3.0 * 0.8**two_n)
    assert fit.delta_hat == pytest.approx(0.8, rel=1e-12)
    assert fit.C_hat == pytest.approx(3.0, rel=1e-10)
    assert fit.r2 == pytest.approx(1.0)


def test_fit_decay_recurrent_control():
    # identity chain: p^(2n)(x,x) = 1, so delta_hat = 1 and the fit fails
    fit = fit_decay(np.arange(2, 21, 2), np.ones(10))
    assert fit.delta_hat == pytest.approx(1.0) and not fit.passed


def test_fit_decay_errors():
    with pytest.raises(NonconvergentFit):
        fit_decay([2, 4, 6], [1.0, 0.0, 0.5])
    with pytest.raises(ValueError):
        GreenLab.spectral_radius_estimate(None, O, 5)


# -- first passage ----------------------------------------------------------------

def test_first_passage_self(lab):
    assert lab.first_passage(O, O) == 1.0


def test_first_passage_truncated_matches_propagation(lab, chain, f2):
    for y in (av(f2, 1, 1), Vertex(f2.parse("a^2"), 0), Vertex((), 2)):
        prop = first_passage_propagation(chain, O, y, 7)
        ser = lab.first_passage(O, y, N=7)
        assert ser == pytest.approx(prop, rel=1e-9)


def test_first_passage_monotone(lab, f2):
    y = av(f2, 4, 2)
    vals = [lab.first_passage(O, y, N) for N in (4, 8, 16, 32, 64)]
    assert all(a <= b + 1e-15 for a, b in zip(vals, vals[1:]))


def test_green_equals_first_passage_times_return(lab, long_series, near_vertices):
    """G(x,y) = F(x,y) G(y,y): F from the 256-step time series, G from the
    Fourier solve."""
    pairs = [(O, y) for y in near_vertices if y != O][:30]
    for x, y in pairs:
        gyy = long_series.return_series(y.depth)
        F_xy = series_mul(long_series.series(x, y), series_inv(gyy)).sum()
        assert F_xy <= lab.first_passage(x, y) * (1 + 1e-6)
        gap = abs(lab.green(x, y) - F_xy * lab.pieces.diag(y.depth)) / lab.green(x, y)
        assert gap < 1e-3


# -- inequalities -----------------------------------------------------------------

def test_isoperimetric_single_vertex(lab):
    assert lab.isoperimetric_ratio({O}) == 1
    assert lab.boundary_flow({O}) == F(1, 10)


def test_isoperimetric_bounded(lab):
    ratios = lab.isoperimetric_ratios(30, random.Random(0), max_size=60)
    assert all(r > 0 for r in ratios)
    assert max(ratios) < 50


def test_triangle_on_geodesics(lab):
    rep = lab.verify_inequality("triangle", count=60, seed=2, radius=5)
    assert rep.max_constant >= 1 and np.all(rep.constants > 0)


@pytest.mark.parametrize("kind", ["harnack1", "harnack2"])
def test_harnack_constants_finite(lab, kind):
    rep = lab.verify_inequality(kind, count=60, seed=4, radius=5)
    assert np.isfinite(rep.max_constant) and rep.max_constant >= 1


def test_ancona_stable(lab):
    rep = lab.verify_inequality("ancona", count=200, seed=5, distance=8, r=1)
    assert rep.stable
    assert rep.max_constant >= 1


def test_inequality_errors(lab):
    with pytest.raises(SampleTooSmall):
        lab.verify_inequality("ancona", count=1)
    with pytest.raises(ValueError):
        lab.verify_inequality("nonsense", count=10)


def test_hyperbolicity_graph(lab):
    est = lab.hyperbolicity("graph", radius=6, quadruples=2000, seed=1)
    again = lab.hyperbolicity("graph", radius=6, quadruples=2000, seed=1)
    assert est.delta_hat == again.delta_hat
    assert 0 < est.delta_hat <= 3


def test_irreducibility_gap_report(lab):
    rep = lab.irreducibility_gap(60, seed=2)
    assert rep["c0"] == 0 and rep["min_log_path_probability"] < 0
