"""Harmonic and Patterson-Sullivan measures on finite boundary proxies.

A boundary point is represented by a proxy vertex at graph distance
``R_horizon`` from (e,0): the first exit of a path from the ball
(harmonic measure), or the end of a ray through an orbit point
(Patterson-Sullivan measure).  Shadows and visual balls are decided by
Gromov products between proxies.

Measures of small sets are estimated by changing the starting point.
For the harmonic measure, nu_e = K(e,.)/K(y,.) nu_y where the Martin kernel
ratio K(e,xi)/K(y,xi) is read off as G(e,xi~)/G(y,xi~) at the proxy.  For
the Patterson-Sullivan measure the ball sum around e is rewritten as one
around an orbit point y, reweighted by e^{-s(rho(e,g) - rho(y,g))}.
Either way, a pivot y inside the set of interest puts most samples where
they matter, and y = e recovers plain Monte Carlo.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

import numpy as np

from .census import BallCensus
from .cusped_graph import Vertex
from .green_lab import ORIGIN, GreenLab
from .group_model import FREE_FACTOR, BudgetExceeded
from .piece_green import TableRange
from .walker import Walker

LN10 = math.log(10.0)


class ProxiesTooClose(ValueError):
    pass


class InsufficientSpread(ValueError):
    pass


class DivergentSeries(ValueError):
    pass


@dataclass
class BoundarySample:
    proxy: Vertex
    origin: Vertex
    weight: float
    density: float | None = None     # exact point mass e^{-s rho}/Z (Patterson-Sullivan)


@dataclass
class ShadowSpec:
    """Proxy xi~ lies in the shadow iff (xi~|y)_x >= rho(x,y) - r."""
    base: Vertex
    target: Vertex
    radius: float
    metric: str = "green"

    def __post_init__(self):
        if self.metric not in ("graph", "green"):
            raise ValueError(f"unknown metric {self.metric!r}")


@dataclass
class ProxySet:
    """Weighted proxies for one measure seen from ``origin``, sampled around ``pivot``."""
    kind: str
    origin: Vertex
    pivot: Vertex
    R_horizon: int
    proxies: list
    weights: np.ndarray
    s: float | None = None
    skipped: int = 0                 # proxies dropped (outside the Green tables)
    density: np.ndarray | None = None
    _rho: dict = field(default_factory=dict, repr=False)

    def __len__(self):
        return len(self.proxies)

    @property
    def total(self) -> float:
        return float(self.weights.sum())

    def samples(self) -> list:
        dens = self.density if self.density is not None else [None] * len(self)
        return [BoundarySample(v, self.origin, float(w), None if d is None else float(d))
                for v, w, d in zip(self.proxies, self.weights, dens)]


@dataclass
class RegressionReport:
    kind: str
    slope: float
    intercept: float
    r_squared: float
    target: float
    x: list
    y: list
    epsilon: float | None = None
    cross_target: float | None = None
    dropped: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def relative_gap(self) -> float:
        return abs(self.slope - self.target) / abs(self.target)

    def to_json(self) -> dict:
        return {"kind": self.kind, "slope": self.slope, "intercept": self.intercept,
                "r_squared": self.r_squared, "target": self.target,
                "relative_gap": self.relative_gap, "epsilon": self.epsilon,
                "cross_target": self.cross_target, "x": self.x, "y": self.y,
                "dropped": self.dropped, **self.extra}


def ols(x, y):
    """Slope, intercept and R^2 of y on x."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    if len(x) < 3:
        raise InsufficientSpread("regression needs at least three points")
    slope, icpt = np.polyfit(x, y, 1)
    res = y - (slope * x + icpt)
    tot = ((y - y.mean()) ** 2).sum()
    return float(slope), float(icpt), float(1 - (res ** 2).sum() / tot) if tot > 0 else 1.0


def _check_spread(x):
    span = max(x) - min(x)
    if span < LN10:
        raise InsufficientSpread(f"abscissae span {span:.3f} < one decade")


def epsilon_for(delta_hat: float) -> float:
    """Visual parameter min(1, 1/(5 delta))."""
    return min(1.0, 1.0 / (5 * delta_hat)) if delta_hat > 0 else 1.0


def ray_endpoint(graph, g: tuple, R: int) -> Vertex:
    """Extend the orbit point (g,0) along free-factor edges to graph distance R.

    Free-factor edges are cut edges, so every geodesic from (e,0) to the
    endpoint passes through (g,0).
    """
    grp = graph.group
    d = graph.depth0_distance(g)
    if d > R:
        raise ValueError(f"orbit point at distance {d} beyond R={R}")
    sign = 1
    if g and g[-1][0] == FREE_FACTOR:
        sign = 1 if g[-1][1] > 0 else -1
    return Vertex(grp.mul(g, grp.free_element(sign * (R - d))), 0)


def k_H(lab: GreenLab, y: Vertex) -> float:
    """log g_H(a^{rho_X(y, orbit)}) inside horoballs, rho_G(y, orbit) outside.

    Vertices outside horoballs are orbit points, so the second case is 0.
    The distance to the orbit of (g, n) is n.
    """
    if y.depth == 0:
        return 0.0
    a = float(lab.chain.params.a)
    return math.log(lab.group.growth(0, a ** y.depth))


def cusp_normalization(lab: GreenLab, depths=range(1, 11)) -> dict:
    """k_H((e,n)) - rho_G((e,n),(e,0)) along the vertical ray.

    Bounded values mean the Green function decays like 1/g_H(a^n) in the
    cusp with a constant that does not drift; the fitted slope over n
    flags drift.
    """
    depths = [n for n in depths if n <= lab.pieces.D]
    vals = [float(k_H(lab, Vertex((), n)) - lab.green_metric(Vertex((), n), ORIGIN))
            for n in depths]
    slope = float(np.polyfit(list(depths), vals, 1)[0]) if len(vals) > 1 else 0.0
    span = max(depths) - min(depths) if depths else 0
    return {"depths": depths, "values": vals, "slope": slope,
            "drift": bool(abs(slope) * span > 1.0)}


class BoundaryMeasures:
    """Sampling and regressions for boundary measures of one chain.

    Parameters
    ----------
    lab : GreenLab
    R_horizon : proxy radius (graph distance from (e,0))
    critical : D_Gamma estimate, needed for Patterson-Sullivan sampling
    delta_X, delta_G : hyperbolicity estimates (computed on demand)
    """

    def __init__(self, lab: GreenLab, R_horizon: int = 30, critical: float | None = None,
                 delta_X: float | None = None, delta_G: float | None = None,
                 seed: int = 1, census_radius: int | None = None,
                 epsilon_X: float | None = None, epsilon_G: float | None = None):
        self.lab = lab
        self._eps = {"graph": epsilon_X, "green": epsilon_G}
        self.chain = lab.chain
        self.graph = lab.graph
        self.group = lab.group
        self.R = R_horizon
        self.critical = critical
        self._delta = {"graph": delta_X, "green": delta_G}
        self.seed = seed
        self.walker = Walker(self.chain)
        self._census = BallCensus(self.graph, census_radius or R_horizon)
        self._stream = 0                 # next unused path stream index

    # -- parameters -------------------------------------------------------

    def delta(self, metric: str) -> float:
        if self._delta[metric] is None:
            self._delta[metric] = self.lab.hyperbolicity(metric, radius=8, quadruples=5000,
                                                         seed=self.seed).delta_hat
        return self._delta[metric]

    def epsilon(self, metric: str) -> float:
        if self._eps[metric] is not None:
            return self._eps[metric]
        return epsilon_for(self.delta(metric))

    @property
    def R_nu(self) -> float:
        return 2 * self.delta("green") + 2

    @property
    def R_X(self) -> float:
        return 2 * self.delta("graph") + 2

    def rho(self, metric: str):
        return self.graph.distance if metric == "graph" else self.lab.green_metric

    def gromov(self, metric: str, x: Vertex, u: Vertex, v: Vertex) -> float:
        r = self.rho(metric)
        return 0.5 * (r(x, u) + r(x, v) - r(u, v))

    def _streams(self, count: int) -> int:
        lo = self._stream
        self._stream += count
        return lo

    # -- sampling ---------------------------------------------------------

    def harmonic(self, M: int, pivot: Vertex = ORIGIN, seed: int | None = None,
                 first_index: int | None = None) -> ProxySet:
        """Exit proxies of M paths started at ``pivot``, weighted as a sample of nu_e.

        With pivot = (e,0) every weight is 1/M.  Otherwise the weight is
        G(e,xi~)/(M G(pivot,xi~)); proxies outside the Green tables are
        dropped and counted.
        """
        if M < 1:
            raise ValueError("need at least one path")
        seed = self.seed if seed is None else seed
        fi = self._streams(M) if first_index is None else first_index
        table, piece, off, depth, ex = self.walker.run_to_radius(pivot, self.R, M, seed,
                                                                 first_index=fi)
        if (ex < 0).any():
            raise BudgetExceeded(f"{int((ex < 0).sum())} paths did not leave the ball")
        proxies = [Vertex(table.element(int(piece[i]), off[i]), int(depth[i])) for i in range(M)]
        if pivot == ORIGIN:
            return ProxySet("harmonic", ORIGIN, pivot, self.R, proxies, np.full(M, 1.0 / M))
        keep, w = [], []
        for v in proxies:
            try:
                lr = self.lab.log_green(ORIGIN, v) - self.lab.log_green(pivot, v)
            except TableRange:
                continue
            keep.append(v)
            w.append(math.exp(lr) / M)
        return ProxySet("harmonic", ORIGIN, pivot, self.R, keep, np.array(w),
                        skipped=M - len(keep))

    def ps_radius_law(self, s: float) -> np.ndarray:
        """Probabilities of rho_X(e,g) = n, n <= R, under the truncated measure."""
        cen = self._census
        logs = np.array([math.log(cen.orbit[n]) - s * n for n in range(self.R + 1)])
        w = np.exp(logs - logs.max())
        return w / w.sum()

    def ps(self, M: int, s: float, pivot: Vertex = ORIGIN, seed: int | None = None) -> ProxySet:
        """Patterson-Sullivan proxies: orbit points g with rho_X(e,g) <= R and
        mass proportional to e^{-s rho_X(e,g)}, recorded as ray endpoints.

        Points are drawn exactly (census) from the measure centred at the
        orbit point ``pivot`` and reweighted to the measure centred at e.
        """
        if self.critical is not None and s <= self.critical:
            raise DivergentSeries(f"s={s} <= critical exponent {self.critical}")
        if pivot.depth != 0:
            raise ValueError("pivot must be an orbit point")
        seed = self.seed if seed is None else seed
        rnd = random.Random(seed)
        law = self.ps_radius_law(s)
        cum = np.cumsum(law)
        cen = self._census
        logZ = math.log(sum(math.exp(math.log(cen.orbit[n]) - s * n) for n in range(self.R + 1)))
        grp = self.group
        proxies, w, dens = [], [], []
        dropped = 0
        for _ in range(M):
            n = int(min(np.searchsorted(cum, rnd.random(), side="right"), self.R))
            gp = cen.sample_vertex(n, rnd, depth0=True).element
            g = grp.mul(pivot.element, gp)
            d = self.graph.depth0_distance(g)
            if d > self.R:
                dropped += 1
                continue
            proxies.append(ray_endpoint(self.graph, g, self.R))
            w.append(math.exp(-s * (d - n)) / M)
            dens.append(math.exp(-s * d - logZ))
        return ProxySet("ps", ORIGIN, pivot, self.R, proxies, np.array(w), s=s,
                        skipped=dropped, density=np.array(dens))

    # -- shadows and balls ------------------------------------------------

    def _rho_origin(self, ps: ProxySet, metric: str) -> np.ndarray:
        if metric not in ps._rho:
            r = self.rho(metric)
            ps._rho[metric] = np.array([r(ps.origin, v) for v in ps.proxies])
        return ps._rho[metric]

    def in_shadow(self, ps: ProxySet, shadow: ShadowSpec) -> np.ndarray:
        x, y, r = shadow.base, shadow.target, shadow.radius
        if x != ps.origin:
            raise ValueError("shadow and samples must share the origin")
        if y == x:
            return np.ones(len(ps), dtype=bool)
        rho = self.rho(shadow.metric)
        dxy = rho(x, y)
        far = self._rho_origin(ps, "graph")
        if len(ps) and far.min() < 2 * self.graph.distance(x, y):
            raise ProxiesTooClose("proxies must lie at least twice as far as the target")
        dx = self._rho_origin(ps, shadow.metric)
        dy = np.array([rho(y, v) for v in ps.proxies])
        gp = 0.5 * (dx + dxy - dy)
        return gp >= dxy - r

    def measure_of_shadow(self, ps: ProxySet, shadow: ShadowSpec) -> float:
        return float(ps.weights[self.in_shadow(ps, shadow)].sum())

    def ball_measure(self, ps: ProxySet, center: Vertex, level: float, metric: str) -> float:
        """Weight of proxies eta with (center|eta)_e >= level, i.e. the visual
        ball of radius e^{-eps level} around ``center``."""
        rho = self.rho(metric)
        dx = self._rho_origin(ps, metric)
        dc = rho(ps.origin, center)
        dce = np.array([rho(center, v) for v in ps.proxies])
        return float(ps.weights[0.5 * (dx + dc - dce) >= level].sum())

    # -- pivots -----------------------------------------------------------

    def pivot_on_geodesic(self, xi: Vertex, level: float, metric: str,
                          orbit_only: bool = False) -> Vertex:
        """The vertex of the geodesic [(e,0), xi] whose distance from (e,0) is
        closest to ``level`` (the last orbit point at or below it if orbit_only)."""
        geo = self.graph.geodesic(ORIGIN, xi)
        rho = self.rho(metric)
        if orbit_only:
            best = ORIGIN
            for v in geo:
                if v.depth == 0 and rho(ORIGIN, v) <= level:
                    best = v
            return best
        return min(geo, key=lambda v: abs(rho(ORIGIN, v) - level))

    # -- regressions ------------------------------------------------------

    def shadow_targets(self, distances=range(6, 15), per_distance: int = 4,
                       seed: int | None = None, depth0: bool = False) -> list:
        """Targets y: uniform vertices on the spheres of the given radii."""
        rnd = random.Random(self.seed if seed is None else seed)
        return [self._census.sample_vertex(d, rnd, depth0=depth0)
                for d in distances for _ in range(per_distance)]

    def shadow_nu(self, targets, M: int = 1000, r: float | None = None) -> RegressionReport:
        """log nu(S_G(e, B_G(y, r))) against -rho_G(e, y); target slope 1."""
        r = self.R_nu if r is None else r
        xs, ys, dropped = [], [], 0
        for y in targets:
            ps = self.harmonic(M, pivot=y)
            val = self.measure_of_shadow(ps, ShadowSpec(ORIGIN, y, r, "green"))
            if val <= 0:
                dropped += 1
                continue
            xs.append(-self.lab.green_metric(ORIGIN, y))
            ys.append(math.log(val))
        _check_spread(xs)
        slope, icpt, r2 = ols(xs, ys)
        return RegressionReport("shadow_nu", slope, icpt, r2, 1.0, xs, ys, dropped=dropped,
                                extra={"shadow_radius": r})

    def shadow_ps(self, targets, s: float, M: int = 1000,
                  r: float | None = None) -> RegressionReport:
        """log mu(S_X(e, B_X(y, r))) against -rho_X(e, y), y orbit points; target D_Gamma."""
        r = self.R_X if r is None else r
        xs, ys, dropped = [], [], 0
        for y in targets:
            ps = self.ps(M, s, pivot=y, seed=self.seed + self._streams(1))
            val = self.measure_of_shadow(ps, ShadowSpec(ORIGIN, y, r, "graph"))
            if val <= 0:
                dropped += 1
                continue
            xs.append(-float(self.graph.distance(ORIGIN, y)))
            ys.append(math.log(val))
        _check_spread(xs)
        slope, icpt, r2 = ols(xs, ys)
        return RegressionReport("shadow_ps", slope, icpt, r2, self.critical, xs, ys,
                                dropped=dropped, extra={"shadow_radius": r, "s": s})

    def _ball_regression(self, kind, centers, levels, metric, sampler, target,
                         orbit_only=False, cross_target=None, extra=None) -> RegressionReport:
        eps = self.epsilon(metric)
        per_level: dict = {t: [] for t in levels}
        dropped = 0
        for xi in centers:
            for t in levels:
                y = self.pivot_on_geodesic(xi, t, metric, orbit_only)
                val = self.ball_measure(sampler(y), xi, t, metric)
                if val <= 0:
                    dropped += 1
                    continue
                per_level[t].append(math.log(val))
        xs = [-eps * t for t in levels if per_level[t]]
        ys = [float(np.mean(per_level[t])) for t in levels if per_level[t]]
        _check_spread(xs)
        slope, icpt, r2 = ols(xs, ys)
        return RegressionReport(kind, slope, icpt, r2, target, xs, ys, eps, cross_target,
                                dropped, extra or {})

    def dimension_nu(self, metric: str, centers, levels, M: int = 500,
                     l_X: float | None = None, l_G: float | None = None,
                     h: float | None = None) -> RegressionReport:
        """log nu(ball(xi, e^{-eps t})) against log radius in d_{metric, eps}.

        Targets: 1/eps_G for the Green metric, l_G/(eps_X l) for the graph
        metric (cross-target h/(eps_X l)).
        """
        eps = self.epsilon(metric)
        if metric == "green":
            target, cross = 1 / eps, (h / (eps * l_G) if h and l_G else None)
        else:
            if not (l_X and l_G):
                raise ValueError("graph-metric target needs both drifts")
            target, cross = l_G / (eps * l_X), (h / (eps * l_X) if h else None)
        return self._ball_regression(f"dimension_nu_{'G' if metric == 'green' else 'X'}",
                                     centers, levels, metric,
                                     lambda y: self.harmonic(M, pivot=y), target, False, cross)

    def dimension_ps(self, centers, levels, s: float, M: int = 500) -> RegressionReport:
        """log mu(ball(xi, e^{-eps_X t})) against log radius; target D_Gamma/eps_X."""
        eps = self.epsilon("graph")

        def sampler(y):
            return self.ps(M, s, pivot=y, seed=self.seed + self._streams(1))
        return self._ball_regression("dimension_ps", centers, levels, "graph", sampler,
                                     self.critical / eps, True, extra={"s": s})

    def ahlfors(self, centers, levels, M: int = 500) -> RegressionReport:
        """dimension_nu in the Green metric around arbitrary (not nu-typical)
        centres; the spread of residuals measures regularity."""
        rep = self.dimension_nu("green", centers, levels, M)
        rep.kind = "ahlfors"
        pred = rep.slope * np.array(rep.x) + rep.intercept
        rep.extra["max_residual"] = float(np.abs(np.array(rep.y) - pred).max())
        return rep

    def harmonic_centers(self, count: int, seed: int | None = None) -> list:
        """nu-typical centres: exit proxies of paths from (e,0)."""
        return list(self.harmonic(count, seed=seed).proxies)

    def ps_centers(self, count: int, seed: int | None = None) -> list:
        """Uniform orbit points on the sphere of radius R (where the measure
        concentrates as s decreases to the critical exponent)."""
        rnd = random.Random(self.seed if seed is None else seed)
        return [self._census.sample_vertex(self.R, rnd, depth0=True) for _ in range(count)]


def boundary_sample(lab: GreenLab, origin: Vertex = ORIGIN, R_horizon: int = 30, M: int = 1000,
                    kind: str = "harmonic", s: float | None = None, seed: int = 1,
                    critical: float | None = None) -> list:
    """Weighted proxies of the harmonic or Patterson-Sullivan measure seen from origin."""
    if origin != ORIGIN:
        raise ValueError("proxies are measured from (e,0); translate the problem first")
    bm = BoundaryMeasures(lab, R_horizon, critical=critical, seed=seed)
    if kind == "harmonic":
        return bm.harmonic(M).samples()
    if kind == "ps":
        if s is None:
            raise ValueError("Patterson-Sullivan sampling needs s")
        return bm.ps(M, s).samples()
    raise ValueError(f"unknown kind {kind!r}")


@dataclass
class GrowthCensus:
    annuli: list
    orbit_counts: list
    coset_counts: list
    orbit_rate: float
    coset_rate: float
    metric: str
    width: float

    def to_json(self) -> dict:
        return {"annuli": self.annuli, "orbit_counts": self.orbit_counts,
                "coset_counts": self.coset_counts, "orbit_rate": self.orbit_rate,
                "coset_rate": self.coset_rate, "metric": self.metric, "width": self.width}


def _rate(annuli, counts, width):
    pts = [(a, math.log(c)) for a, c in zip(annuli, counts) if c > 0]
    if len(pts) < 2:
        return float("nan")
    a, lc = zip(*pts)
    return float(np.polyfit(np.array(a) * width, lc, 1)[0])


def coset_growth_census(lab: GreenLab, radius: int, width: float = 1.0, metric: str = "graph",
                        sample: int = 200, seed: int = 1) -> GrowthCensus:
    """Orbit points and new coset representatives per annulus of ``width``.

    Graph-metric annuli are exact (census).  Green-metric annuli are
    estimated by sampling ``sample`` points per graph sphere and are only
    reported while the graph ball of ``radius`` covers them.
    """
    cen = lab.census(radius)
    if metric == "graph":
        nA = int(radius // width)
        orbit = [0] * nA
        coset = [0] * nA
        for n in range(radius + 1):
            k = int(n // width)
            if k < nA:
                orbit[k] += cen.orbit[n]
                coset[k] += cen.C[n]
    else:
        rnd = random.Random(seed)
        vals_o, vals_c = [], []
        for n in range(radius + 1):
            po = [lab.green_metric(ORIGIN, cen.sample_vertex(n, rnd, depth0=True))
                  for _ in range(sample if cen.orbit[n] > 1 else 1)]
            vals_o.append((cen.orbit[n], po))
            pc = [lab.green_metric(ORIGIN, Vertex(cen.sample_coset(n, rnd), 0))
                  for _ in range(sample if cen.C[n] > 1 else 1)]
            vals_c.append((cen.C[n], pc))
        cover = min(min(p) for _, p in vals_o[-1:])
        nA = max(1, int(cover // width))
        orbit, coset = [0.0] * nA, [0.0] * nA
        for store, vals in ((orbit, vals_o), (coset, vals_c)):
            for count, pts in vals:
                for v in pts:
                    k = int(v // width)
                    if k < nA:
                        store[k] += count / len(pts)
    annuli = list(range(len(orbit)))
    upper = annuli[len(annuli) // 2:]
    return GrowthCensus(annuli, orbit, coset,
                        _rate(upper, [orbit[a] for a in upper], width),
                        _rate(upper, [coset[a] for a in upper], width), metric, width)
