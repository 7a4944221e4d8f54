"""n-step distributions, Green function, Green metric and the inequality checks.

Three independent routes to the same numbers:

* ``nstep_distribution``: brute-force sparse propagation of the rows
  (exact rationals for small n), the oracle;
* :class:`~cuspwalk.green_series.GreenSeries`: p^(k)(x, y) for all k <= N at
  once through the piece decomposition;
* :class:`~cuspwalk.piece_green.PieceGreen`: the full sum G(x, y).
"""
from __future__ import annotations

import math
import random
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .census import BallCensus
from .cusped_graph import HyperbolicityEstimate, Vertex, four_point_delta
from .green_series import GreenSeries
from .group_model import BudgetExceeded
from .piece_green import PieceGreen, TableRange
from .walk_kernel import WeightedChain

EXACT_STEPS = 12
ORIGIN = Vertex((), 0)


class NotConverged(RuntimeError):
    """Truncated sum not within the requested tolerance."""


class NonconvergentFit(RuntimeError):
    pass


class SampleTooSmall(ValueError):
    pass


# -- propagation -------------------------------------------------------------


@dataclass
class SparseDistribution:
    weights: dict
    n: int
    origin: Vertex
    lost: object = 0          # mass that left the allowed region
    exact: bool = True

    def __getitem__(self, v):
        return self.weights.get(v, 0)

    def mass(self):
        return sum(self.weights.values(), Fraction(0) if self.exact else 0.0)

    @property
    def truncated(self) -> bool:
        return self.lost != 0

    def __len__(self):
        return len(self.weights)


class _RowCache:
    def __init__(self, chain: WeightedChain, exact: bool):
        self.chain = chain
        self.exact = exact
        self._tpl = {}

    def row(self, v: Vertex):
        n = v.depth
        tpl = self._tpl.get(n)
        if tpl is None:
            tpl = self.chain.row_template(n)
            if not self.exact:
                tpl = [(mv, dn, float(w)) for mv, dn, w in tpl]
            self._tpl[n] = tpl
        mul = self.chain.group.mul
        g = v.element
        return [(Vertex(mul(g, mv), n + dn), w) for mv, dn, w in tpl]


def nstep_distribution(chain: WeightedChain, x: Vertex, n: int, region=None,
                       exact: bool | None = None, absorb: Vertex | None = None,
                       budget: int = 2_000_000) -> SparseDistribution:
    """Distribution of X_n from x by repeated row application.

    ``region`` (any container of vertices, e.g. a CuspedBall's vertex set)
    restricts the support; mass leaving it is accumulated in ``lost``.
    With ``absorb`` the walk is stopped at that vertex, which then holds
    P_x[hitting time <= n].
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    exact = n <= EXACT_STEPS if exact is None else exact
    one = Fraction(1) if exact else 1.0
    rows = _RowCache(chain, exact)
    cur = {x: one}
    lost = 0 * one
    for _ in range(n):
        nxt = defaultdict(lambda: 0 * one)
        for v, w in cur.items():
            if absorb is not None and v == absorb:
                nxt[v] += w
                continue
            for t, p in rows.row(v):
                if region is not None and t not in region:
                    lost += w * p
                else:
                    nxt[t] += w * p
        if len(nxt) > budget:
            raise BudgetExceeded(f"support {len(nxt)} exceeds budget {budget}")
        cur = dict(nxt)
    return SparseDistribution(cur, n, x, lost, exact)


def first_passage_propagation(chain: WeightedChain, x: Vertex, y: Vertex, N: int,
                              exact: bool = False) -> float:
    """P_x[the walk visits y within N steps], by absorbing propagation."""
    if x == y:
        return 1.0
    dist = nstep_distribution(chain, x, N, exact=exact, absorb=y)
    return float(dist[y])


# -- spectral decay ------------------------------------------------------------


@dataclass
class SpectralFit:
    two_n: np.ndarray
    ratios: np.ndarray           # p^(2n)(x,x) / m(x)
    window: tuple[int, int]      # fitted range of 2n
    C_hat: float
    delta_hat: float
    r2: float
    residuals: np.ndarray
    monotone: bool

    @property
    def passed(self) -> bool:
        return bool(self.delta_hat < 1 and self.monotone)

    def to_json(self) -> dict:
        return {
            "two_n": [int(k) for k in self.two_n],
            "ratios": [float(v) for v in self.ratios],
            "window": list(self.window),
            "C_hat": self.C_hat,
            "delta_hat": self.delta_hat,
            "r2": self.r2,
            "residuals": [float(v) for v in self.residuals],
            "monotone": self.monotone,
            "passed": self.passed,
        }


def fit_decay(two_n, ratios, window: tuple[int, int] | None = None) -> SpectralFit:
    """Least squares log(ratio) = log C + 2n log delta over ``window``.

    The default window is the upper half of the range: the first few
    return probabilities are dominated by the short-time transient.
    """
    two_n = np.asarray(two_n, dtype=float)
    ratios = np.asarray(ratios, dtype=float)
    if np.any(ratios <= 0) or len(two_n) < 3:
        raise NonconvergentFit("need at least three positive values")
    if window is None:
        window = (int(two_n[-1]) // 2, int(two_n[-1]))
    sel = (two_n >= window[0]) & (two_n <= window[1])
    if sel.sum() < 3:
        raise NonconvergentFit(f"fewer than three points in window {window}")
    X, Y = two_n[sel], np.log(ratios[sel])
    slope, icpt = np.polyfit(X, Y, 1)
    pred = icpt + slope * X
    ss_res = float(np.sum((Y - pred) ** 2))
    ss_tot = float(np.sum((Y - Y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res == 0 else 0.0)
    if not np.isfinite(slope):
        raise NonconvergentFit("fit produced a non-finite slope")
    monotone = bool(np.all(np.diff(ratios) <= 0))
    return SpectralFit(two_n.astype(int), ratios, tuple(window), float(np.exp(icpt)),
                       float(np.exp(slope)), r2, Y - pred, monotone)


# -- Green function --------------------------------------------------------


@dataclass
class GreenValue:
    x: Vertex
    y: Vertex
    N: int
    partial: float
    tail_bound: float
    rho_G: float | None = None

    @property
    def relative_tail(self) -> float:
        return self.tail_bound / self.partial if self.partial > 0 else math.inf


@dataclass
class InequalityReport:
    kind: str
    constants: np.ndarray = field(repr=False)
    max_constant: float
    max_half: float
    stable: bool
    skipped: int = 0             # samples outside the Green tables

    def to_json(self) -> dict:
        return {"kind": self.kind, "sample": int(len(self.constants)),
                "max_constant": self.max_constant, "max_half_sample": self.max_half,
                "stable": self.stable, "skipped": self.skipped}


class GreenLab:
    """Green-function toolkit for one chain.

    Parameters
    ----------
    chain : WeightedChain
    width, depth : grid for the full Green function (see PieceGreen)
    series_width, series_depth : grid for time-resolved series
    """

    def __init__(self, chain: WeightedChain, width: int | None = None, depth: int = 22,
                 series_width: int | None = None, series_depth: int = 16):
        self.chain = chain
        self.group = chain.group
        self.graph = chain.graph
        self.pieces = PieceGreen(chain, width=width, depth=depth)
        self._series: GreenSeries | None = None
        self._series_opts = (series_width, series_depth)
        self.spectral: SpectralFit | None = None
        self._C_G: float | None = None

    # -- series ---------------------------------------------------------

    def series(self, horizon: int) -> GreenSeries:
        """A GreenSeries covering at least ``horizon`` steps (cached)."""
        if self._series is None or self._series.N < horizon:
            w, d = self._series_opts
            self._series = GreenSeries(self.chain, horizon=max(horizon, 64), width=w, depth=d)
        return self._series

    def return_ratios(self, x: Vertex, n_max: int) -> np.ndarray:
        """p^(2n)(x,x)/m(x) for n = 1..n_max/2."""
        ret = self.series(n_max).return_series(x.depth)
        m = float(self.chain.m_weight(x))
        return np.array([ret[2 * n] / m for n in range(1, n_max // 2 + 1)])

    def spectral_radius_estimate(self, x: Vertex = ORIGIN, n_max: int = 20,
                                 window: tuple[int, int] | None = None) -> SpectralFit:
        if n_max < 6 or n_max % 2:
            raise ValueError("n_max must be even and at least 6")
        two_n = np.arange(2, n_max + 1, 2)
        fit = fit_decay(two_n, self.return_ratios(x, n_max), window)
        if x == ORIGIN or self.spectral is None:
            self.spectral = fit
        return fit

    # -- Green values ---------------------------------------------------

    def default_truncation(self, x: Vertex, y: Vertex) -> int:
        return 4 * self.graph.distance(x, y) + 40

    def green_truncated(self, x: Vertex, y: Vertex, N: int | None = None) -> GreenValue:
        """Partial sum of p^(k)(x,y) over k <= N plus the fitted geometric tail."""
        if self.spectral is None:
            raise NonconvergentFit("tail fit unavailable: run spectral_radius_estimate first")
        if N is None:
            N = self.default_truncation(x, y)
        partial = float(self.series(N).series(x, y)[: N + 1].sum())
        fit = self.spectral
        d = fit.delta_hat
        tail = float(self.chain.m_weight(y)) * fit.C_hat * d ** (N + 1) / (1 - d)
        return GreenValue(x, y, N, partial, tail)

    def green(self, x: Vertex, y: Vertex) -> float:
        return self.pieces.green(x, y)

    def log_green(self, x: Vertex, y: Vertex) -> float:
        return self.pieces.log_green(x, y)

    def log_first_passage(self, x: Vertex, y: Vertex) -> float:
        if x == y:
            return 0.0
        return self.log_green(x, y) - math.log(self.pieces.diag(y.depth))

    def irreducibility_gap(self, count: int = 200, seed: int = 1, radius: int = 6) -> dict:
        """Empirical constant c0 of uniform irreducibility over uniform y, rho_X(e,y) <= radius.

        p^(n)(e,y) = 0 for n < rho_X(e,y), and the product of transition
        probabilities along a geodesic bounds p^(rho_X)(e,y) from below, so a
        positive product on every sampled pair certifies c0 = 0.
        """
        P = self.chain
        worst = 0.0
        c0 = 0
        for y in self.census(radius).sample_ball(count, seed, radius=radius):
            path = self.graph.geodesic(ORIGIN, y)
            logp = 0.0
            for u, v in zip(path, path[1:]):
                p = P.transition_row(u).get(v, 0)
                if p == 0:
                    c0 = None
                    break
                logp += math.log(p)
            worst = min(worst, logp)
        return {"pairs": count, "radius": radius, "c0": c0, "min_log_path_probability": worst}

    def first_passage(self, x: Vertex, y: Vertex, N: int | None = None) -> float:
        """F(x,y): full sum by default, the truncated series sum if N is given."""
        if x == y:
            return 1.0
        if N is None:
            return self.pieces.first_passage(x, y)
        s = self.series(N)
        gxy = s.series(x, y)
        gyy = s.return_series(y.depth)
        from .green_series import series_inv, series_mul
        return float(series_mul(gxy, series_inv(gyy))[: N + 1].sum())

    # -- Green metric ---------------------------------------------------

    def green_constant(self, sample: int = 300, seed: int = 0, radius: int = 6) -> float:
        """Surrogate for C_G: C' = max(witnessed G(x,y)G(y,z)/(m(y)G(x,z)),
        e * witnessed G(x,y)/m(y), e) over a seeded sample, x != y.

        Besides the sampled triples, every depth contributes its nearest
        lateral and vertical neighbour pairs, where G(x,y)/m(y) peaks.
        """
        if self._C_G is None:
            m = self.chain.m_float
            grp = self.group
            worst_pair = 0.0
            for n in range(self.pieces.D):
                v = Vertex((), n)
                nbrs = [Vertex((), n + 1), Vertex(grp.h_element((1,) + (0,) * (grp.rank - 1)), max(n, 1))]
                if n == 0:
                    nbrs.append(Vertex(grp.generators[0], 0))
                for w in nbrs:
                    worst_pair = max(worst_pair, math.exp(self.log_green(v, w)) / m[w.depth],
                                     math.exp(self.log_green(w, v)) / m[v.depth])
            worst_triple = 1.0
            for x, y, z in self._triples(sample, seed, radius):
                if y in (x, z):
                    continue
                worst_pair = max(worst_pair, math.exp(self.log_green(x, y)) / m[y.depth])
                r = (self.log_green(x, y) + self.log_green(y, z) - self.log_green(x, z)
                     - math.log(m[y.depth]))
                worst_triple = max(worst_triple, math.exp(r))
            self._C_G = max(worst_triple, math.e * worst_pair, math.e)
        return self._C_G

    def green_metric(self, x: Vertex, y: Vertex) -> float:
        if x == y:
            return 0.0
        C = self.green_constant()
        return -(self.log_green(x, y) - math.log(C * self.chain.m_float[y.depth]))

    def green_value(self, x: Vertex, y: Vertex, N: int | None = None) -> GreenValue:
        gv = self.green_truncated(x, y, N)
        gv.rho_G = self.green_metric(x, y)
        return gv

    # -- sampling helpers -------------------------------------------------

    def census(self, radius: int) -> BallCensus:
        if not hasattr(self, "_census") or self._census.R < radius:
            self._census = BallCensus(self.graph, radius)
        return self._census

    def hyperbolicity(self, metric: str = "graph", radius: int = 8, quadruples: int = 20000,
                      seed: int = 1) -> HyperbolicityEstimate:
        """Max 4-point defect over quadruples drawn uniformly from B_X((e,0), radius)."""
        rho = self.graph.distance if metric == "graph" else self.green_metric
        if metric not in ("graph", "green"):
            raise ValueError(f"unknown metric {metric!r}")
        pts = self.census(radius).sample_ball(4 * quadruples, seed, radius=radius)
        best, arg = 0.0, None
        for i in range(quadruples):
            a, b, c, d = pts[4 * i: 4 * i + 4]
            val = four_point_delta(rho(a, b), rho(a, c), rho(a, d), rho(b, c), rho(b, d), rho(c, d))
            if val > best:
                best, arg = val, (a, b, c, d)
        return HyperbolicityEstimate(best, quadruples, radius, arg)

    def _triples(self, count: int, seed: int, radius: int):
        """Triples (x, y, z): x uniform in a ball, z = x * (uniform ball point),
        y on the geodesic [x, z] for half of them and uniform otherwise."""
        cen = self.census(radius)
        rnd = random.Random(seed)
        pts = cen.sample_ball(3 * count, seed, radius=radius)
        out = []
        for i in range(count):
            x, y, z = pts[3 * i: 3 * i + 3]
            if i % 2 == 0:
                geo = self.graph.geodesic(x, z)
                y = geo[rnd.randrange(len(geo))]
            out.append((x, y, z))
        return out

    # -- inequalities -------------------------------------------------------

    def verify_inequality(self, kind: str, count: int = 200, seed: int = 0,
                          radius: int = 6, r: int = 1, distance: int | None = None
                          ) -> InequalityReport:
        """Witnessed constants of one inequality over a seeded sample.

        harnack1  (G(x,y)/G(z,y))^(1/rho_X(x,z))
        harnack2  (m(x)G(x,x)/G(y,x))^(1/rho_X(x,y))
        triangle  F(x,y)F(y,z)/(m(y)F(x,z))
        ancona    F(x,z)m(y)/(F(x,y)F(y,z)), y within r of a geodesic [x,z]
                  with rho_X(x,z) = distance (x = (e,0))
        isoperimetric  m(A)/sigma(boundary A) over finite connected sets A
        """
        if count < 2:
            raise SampleTooSmall("need at least two samples")
        rnd = random.Random(seed)
        m = self.chain.m_float
        dist = self.graph.distance
        lF = self.log_first_passage

        def harnack1(x, y, z):
            d = dist(x, z)
            return math.exp((self.log_green(x, y) - self.log_green(z, y)) / d) if d else None

        def triangle(x, y, z):
            if len({x, y, z}) < 3:
                return None
            return math.exp(lF(x, y) + lF(y, z) - lF(x, z) - math.log(m[y.depth]))

        def harnack2(x, y):
            d = dist(x, y)
            if d == 0:
                return None
            lv = math.log(m[x.depth]) + math.log(self.pieces.diag(x.depth)) - self.log_green(y, x)
            return math.exp(lv / d)

        def ancona(x, y, z):
            return math.exp(lF(x, z) + math.log(m[y.depth]) - lF(x, y) - lF(y, z))

        if kind in ("harnack1", "triangle"):
            cases = self._triples(count, seed, radius)
            fn = harnack1 if kind == "harnack1" else triangle
        elif kind == "harnack2":
            pts = self.census(radius).sample_ball(2 * count, seed, radius=radius)
            cases, fn = list(zip(pts[::2], pts[1::2])), harnack2
        elif kind == "ancona":
            cases, fn = self.ancona_triples(count, seed, distance or 8, r), ancona
        elif kind == "isoperimetric":
            cases, fn = None, None
        else:
            raise ValueError(f"unknown inequality {kind!r}")
        vals, skipped = [], 0
        if fn is None:
            vals = [float(v) for v in self.isoperimetric_ratios(count, rnd)]
        else:
            for case in cases:
                try:
                    v = fn(*case)
                except TableRange:
                    skipped += 1
                    continue
                if v is not None:
                    vals.append(v)
        if len(vals) < 2:
            raise SampleTooSmall(f"only {len(vals)} usable samples for {kind}")
        vals = np.array(vals)
        full, half = float(vals.max()), float(vals[: len(vals) // 2].max())
        stable = abs(full - half) < 0.2 * full
        return InequalityReport(kind, vals, full, half, bool(stable), skipped)

    def ancona_triples(self, count: int, seed: int, distance: int, r: int = 1):
        """x = (e,0), z uniform on the sphere of radius ``distance``, y a
        uniform vertex within r of an interior point of the geodesic [x, z]."""
        cen = self.census(distance)
        rnd = random.Random(seed)
        out = []
        while len(out) < count:
            z = cen.sample_vertex(distance, rnd)
            geo = self.graph.geodesic(ORIGIN, z)
            c = geo[1 + rnd.randrange(len(geo) - 2)]
            y = c
            for _ in range(r):
                nb = [w for w in self.graph.neighbors(y)]
                y = nb[rnd.randrange(len(nb))] if rnd.randrange(2) else y
            if y in (ORIGIN, z):
                continue
            out.append((ORIGIN, y, z))
        return out

    def boundary_flow(self, A: set) -> Fraction:
        """sigma(boundary A) = sum over x in A, y not in A of m(x) p(x, y)."""
        tot = Fraction(0)
        for x in A:
            mx = self.chain.m_weight(x)
            for y, p in self.chain.transition_row(x).items():
                if y not in A:
                    tot += mx * p
        return tot

    def isoperimetric_ratio(self, A: set) -> Fraction:
        mass = sum((self.chain.m_weight(v) for v in A), Fraction(0))
        return mass / self.boundary_flow(A)

    def isoperimetric_ratios(self, count: int, rnd: random.Random, max_size: int = 200):
        """Exact m(A)/sigma(dA) over BFS balls, horoball boxes and random clusters."""
        grp, graph = self.group, self.graph
        out = []
        for i in range(count):
            shape = i % 3
            if shape == 0:
                # BFS ball in the graph around a random vertex
                c = Vertex(grp.mul((), grp.h_element((0,) * grp.rank)), rnd.randrange(4))
                A = {c}
                frontier = [c]
                for _ in range(1 + rnd.randrange(2)):
                    nxt = []
                    for v in frontier:
                        for w in graph.neighbors(v):
                            if w not in A and len(A) < max_size:
                                A.add(w)
                                nxt.append(w)
                    frontier = nxt
            elif shape == 1:
                # horoball box {(h, n): |h| <= L, n1 <= n <= n2}
                n1 = 1 + rnd.randrange(4)
                n2 = n1 + rnd.randrange(3)
                L = rnd.randrange(1, 5)
                A = {Vertex(grp.h_element(h), n)
                     for n in range(n1, n2 + 1) for h in grp.lattice_ball(L)}
            else:
                # random connected cluster grown from (e,0)
                size = rnd.randrange(2, max_size + 1)
                A = {ORIGIN}
                order = [ORIGIN]
                while len(A) < size:
                    v = order[rnd.randrange(len(order))]
                    nb = graph.neighbors(v)
                    w = nb[rnd.randrange(len(nb))]
                    if w.depth < self.chain.params.n_max - 1 and w not in A:
                        A.add(w)
                        order.append(w)
            out.append(self.isoperimetric_ratio(A))
        return out

    # -- comparisons with the graph metric --------------------------------

    def cusp_decay(self, depths=(3, 4, 5, 6, 7, 8)) -> list:
        """(n, G((e,n),e), G((e,n),e)/G((e,n-1),e)) along the vertical ray."""
        out = []
        for n in depths:
            g = self.green(Vertex((), n), ORIGIN)
            prev = self.green(Vertex((), n - 1), ORIGIN)
            out.append((n, g, g / prev))
        return out

    def metric_pairs(self, count: int, seed: int, radius: int = 8, min_distance: int = 4):
        """Pairs (x, y) with x uniform in a ball, y = x * (uniform ball point)
        and rho_X(x, y) >= min_distance, all inside the Green tables."""
        cen = self.census(radius + 2)
        rnd = random.Random(seed)
        grp = self.group
        out = []
        while len(out) < count:
            x = cen.sample_vertex(rnd.randrange(radius + 1), rnd)
            u = cen.sample_vertex(rnd.randrange(min_distance, radius + 3), rnd)
            y = Vertex(grp.mul(x.element, u.element), u.depth)
            if self.graph.distance(x, y) < min_distance:
                continue
            try:
                self.log_green(x, y)
            except TableRange:
                continue
            out.append((x, y))
        return out

    def quasi_isometry(self, count: int = 500, seed: int = 1, min_distance: int = 4) -> dict:
        """Smallest K with rho_G/rho_X in [1/K, K] on ``count`` pairs and on
        twice as many (the first half shared)."""
        pairs = self.metric_pairs(2 * count, seed, min_distance=min_distance)
        ratios = np.array([self.green_metric(x, y) / self.graph.distance(x, y) for x, y in pairs])

        def K(r):
            return float(max(r.max(), 1 / r.min()))
        k1, k2 = K(ratios[:count]), K(ratios)
        return {"pairs": count, "min_distance": min_distance, "K": k1, "K_doubled": k2, "min_ratio": float(ratios.min()),
                "max_ratio": float(ratios.max()), "relative_change": abs(k2 - k1) / k1,
                "stable": abs(k2 - k1) < 0.1 * k1}
