"""Drift, entropy and critical exponent of the chain.

Paths come from :class:`~cuspwalk.walker.Walker`.  Every path has its own
random stream, so splitting the sample across worker processes
(``CUSPWALK_WORKERS``) gives the same vertices as a single process.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .census import BallCensus
from .cusped_graph import Vertex
from .green_lab import ORIGIN, GreenLab
from .piece_green import TableRange
from .walk_kernel import WeightedChain
from .walker import Walker


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("CUSPWALK_WORKERS", "1")))
    except ValueError:
        return 1


@dataclass
class PathSample:
    """Positions of ``count`` paths at the checkpoint ``times``."""
    start: Vertex
    seed: int
    times: list
    vertices: list               # vertices[i][k]: path i at times[k]
    max_depth: np.ndarray        # deepest level reached by path i (at checkpoints)

    @property
    def count(self) -> int:
        return len(self.vertices)

    def at(self, t: int) -> list:
        k = self.times.index(t)
        return [row[k] for row in self.vertices]


def _simulate_chunk(args):
    params, start, steps, lo, hi, seed, checkpoints = args
    chain = WeightedChain(params)
    w = Walker(chain)
    b = w.simulate(start, steps, hi - lo, seed, stride=max(steps, 1), first_index=lo,
                   checkpoints=checkpoints)
    rows = [[b.vertex(i, k) for k in range(len(b.times))] for i in range(b.count)]
    return [int(t) for t in b.times], rows, b.depth.max(axis=1) if b.count else np.zeros(0)


def simulate_paths(chain: WeightedChain, steps: int, count: int, seed: int,
                   checkpoints=(), start: Vertex = ORIGIN, workers: int | None = None,
                   chunk: int = 2000) -> PathSample:
    """Simulate ``count`` paths; positions are kept at 0, ``steps`` and the checkpoints."""
    workers = workers or worker_count()
    jobs = [(chain.params, start, steps, lo, min(lo + chunk, count), seed, tuple(checkpoints))
            for lo in range(0, count, chunk)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as ex:
            parts = list(ex.map(_simulate_chunk, jobs))
    else:
        parts = [_simulate_chunk(j) for j in jobs]
    times = parts[0][0] if parts else sorted({0, steps, *checkpoints})
    rows = [r for p in parts for r in p[1]]
    depth = np.concatenate([p[2] for p in parts]) if parts else np.zeros(0)
    return PathSample(start, seed, times, rows, depth)


@dataclass
class RateEstimate:
    """Rate estimate value +- stderr from per-path values divided by n."""
    name: str
    value: float
    stderr: float
    n: int
    count: int
    half_value: float | None = None     # same statistic at n/2
    skipped: int = 0

    @property
    def relative_stderr(self) -> float:
        return self.stderr / abs(self.value) if self.value else math.inf

    def to_json(self) -> dict:
        return {"value": self.value, "stderr": self.stderr, "n": self.n, "count": self.count,
                "half_value": self.half_value, "skipped": self.skipped}


def _rate(name, vals, n, half=None, skipped=0) -> RateEstimate:
    vals = np.asarray(vals, dtype=float) / n
    if len(vals) < 2:
        raise ValueError(f"{name}: need at least two paths")
    return RateEstimate(name, float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(len(vals))),
                        n, len(vals), half, skipped)


def estimate_drift(lab: GreenLab, paths: PathSample, metric: str = "graph") -> RateEstimate:
    """l = lim rho(e, Z_n)/n for metric "graph" (rho_X) or "green" (rho_G).

    Paths whose endpoint lies outside the Green tables are skipped and counted.
    """
    if metric == "graph":
        def dist(v):
            return lab.graph.distance(paths.start, v)
    elif metric == "green":
        def dist(v):
            return lab.green_metric(paths.start, v)
    else:
        raise ValueError(f"unknown metric {metric!r}")
    n = paths.times[-1]
    if n <= 0:
        raise ValueError("drift needs at least one step")

    def evaluate(t):
        vals, skipped = [], 0
        for v in paths.at(t):
            try:
                vals.append(dist(v))
            except TableRange:
                skipped += 1
        return vals, skipped

    vals, skipped = evaluate(n)
    half = None
    if n // 2 in paths.times and n // 2 > 0:
        hv, _ = evaluate(n // 2)
        half = float(np.mean(hv) / (n // 2)) if hv else None
    return _rate(f"drift_{metric}", vals, n, half, skipped)


@dataclass
class EntropyEstimate:
    value: float
    stderr: float
    grid: list
    H: list                      # mean -log q^(n)(e, Z_n) for n in grid
    H_stderr: list
    unreachable: list            # paths with q^(n) = 0 per grid point
    out_of_range: list           # paths outside the Green tables per grid point
    intercept: float
    subadditive: bool
    count: int

    def to_json(self) -> dict:
        return {"value": self.value, "stderr": self.stderr, "grid": self.grid, "H": self.H,
                "H_stderr": self.H_stderr, "unreachable": self.unreachable,
                "out_of_range": self.out_of_range, "intercept": self.intercept,
                "subadditive": self.subadditive, "count": self.count}


def node_transition(lab: GreenLab, x: Vertex, y: Vertex, n: int) -> float:
    """q^(n)(x,y): min over x' in the m-node of x of the n-step mass that x'
    sends to the m-node of y."""
    s = lab.series(n)
    return min(float(s.node_series(xp, y)[n]) for xp in lab.chain.m_node(x))


def estimate_entropy(lab: GreenLab, paths: PathSample, grid=None) -> EntropyEstimate:
    """Entropy h from H_n = E[-log q^(n)(e, Z_n)], fitted as h n + c over the
    upper half of the grid.  q^(n) = 0 marks y as unreachable from some start
    in the node; those paths are excluded and counted."""
    grid = sorted(grid or [t for t in paths.times if t > 0])
    missing = [t for t in grid if t not in paths.times]
    if missing:
        raise ValueError(f"paths lack checkpoints {missing}")
    if len(grid) < 2:
        raise ValueError("entropy fit needs at least two grid points")
    lab.series(max(grid))
    H, Hs, unreach, oor, per_path = [], [], [], [], []
    for t in grid:
        vals, u, o = [], 0, 0
        for v in paths.at(t):
            try:
                q = node_transition(lab, paths.start, v, t)
            except TableRange:
                o += 1
                continue
            if q <= 0:
                u += 1
                continue
            vals.append(-math.log(q))
        if len(vals) < 2:
            raise ValueError(f"too few usable paths at n={t}")
        vals = np.array(vals)
        H.append(float(vals.mean()))
        Hs.append(float(vals.std(ddof=1) / math.sqrt(len(vals))))
        unreach.append(u)
        oor.append(o)
        per_path.append(vals)
    g = np.array(grid, dtype=float)
    sel = g >= g[-1] / 2
    if sel.sum() < 2:
        sel[-2:] = True
    h, c = np.polyfit(g[sel], np.array(H)[sel], 1)
    # stderr of the slope: endpoint standard errors carried through the fit
    lo, hi = np.nonzero(sel)[0][[0, -1]]
    stderr = math.hypot(Hs[lo], Hs[hi]) / (g[hi] - g[lo]) if hi > lo else Hs[hi] / g[hi]
    stderr = max(stderr, Hs[hi] / g[hi])
    # subadditivity of H_n (up to two standard errors)
    sub = all(H[k] <= H[i] + H[j] + 2 * (Hs[i] + Hs[j] + Hs[k])
              for i in range(len(grid)) for j in range(len(grid))
              for k in range(len(grid)) if grid[i] + grid[j] == grid[k])
    return EntropyEstimate(float(h), float(stderr), grid, H, Hs, unreach, oor, float(c), sub,
                           paths.count)


@dataclass
class CriticalExponent:
    value: float
    radii: list
    log_counts: list
    r_squared: float

    def to_json(self) -> dict:
        return {"value": self.value, "radii": self.radii, "log_counts": self.log_counts,
                "r_squared": self.r_squared}


def critical_exponent(graph, R_max: int = 60, R_min: int | None = None,
                      counts=None) -> CriticalExponent:
    """D_Gamma = lim log #(Gamma (e,0) inside B_X(n)) / n, by a linear fit of
    log counts over radii R_min..R_max (default the upper half).

    ``counts`` may be given directly (e.g. from a BFS); otherwise the exact
    census supplies them.
    """
    R_min = R_max // 2 if R_min is None else R_min
    radii = list(range(R_min, R_max + 1))
    if len(radii) < 4:
        raise ValueError("critical exponent needs at least four radii")
    if counts is None:
        cen = BallCensus(graph, R_max)
        counts = [cen.orbit_ball(r) for r in range(R_max + 1)]
    logs = [math.log(counts[r]) for r in radii]
    slope, icpt = np.polyfit(radii, logs, 1)
    pred = slope * np.array(radii) + icpt
    ss = float(((np.array(logs) - pred) ** 2).sum())
    tot = float(((np.array(logs) - np.mean(logs)) ** 2).sum())
    return CriticalExponent(float(slope), radii, logs, 1 - ss / tot if tot else 1.0)


@dataclass
class ExcursionStats:
    mean_max_depth: float
    max_depth: int
    depth_histogram: dict
    final_depth_mean: float
    tracking: float              # mean |rho_X(e,Z_n)/n - l| over paths

    def to_json(self) -> dict:
        return {"mean_max_depth": self.mean_max_depth, "max_depth": self.max_depth,
                "depth_histogram": self.depth_histogram, "final_depth_mean": self.final_depth_mean,
                "tracking": self.tracking}


def excursion_stats(lab: GreenLab, paths: PathSample, drift: RateEstimate) -> ExcursionStats:
    md = np.asarray(paths.max_depth, dtype=int)
    hist = {int(k): int(v) for k, v in zip(*np.unique(md, return_counts=True))}
    n = paths.times[-1]
    final = paths.at(n)
    dev = [abs(lab.graph.distance(paths.start, v) / n - drift.value) for v in final]
    return ExcursionStats(float(md.mean()), int(md.max()), hist,
                          float(np.mean([v.depth for v in final])), float(np.mean(dev)))


@dataclass
class FundamentalReport:
    drift_X: RateEstimate
    drift_G: RateEstimate
    entropy: EntropyEstimate
    critical: CriticalExponent
    excursions: ExcursionStats | None = None
    checks: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"drift_X": self.drift_X.to_json(), "drift_G": self.drift_G.to_json(),
                "entropy": self.entropy.to_json(), "critical_exponent": self.critical.to_json(),
                "excursions": self.excursions.to_json() if self.excursions else None,
                "checks": self.checks}


def fundamental_checks(lX: RateEstimate, lG: RateEstimate, h: EntropyEstimate,
                       D: CriticalExponent) -> dict:
    """The inequality h <= l D and the identity h = l_G, with their margins."""
    vals = {"drift_X": lX.value, "drift_G": lG.value, "entropy": h.value, "critical": D.value}
    bad = sorted(k for k, v in vals.items() if not (math.isfinite(v) and v > 0))
    if bad:
        raise ValueError(f"degenerate estimates (must be finite and positive): {bad}")
    combined = math.hypot(h.stderr, D.value * lX.stderr)
    return {
        "drift_positive": lX.value > 0,
        "drift_relative_stderr": lX.relative_stderr,
        "entropy_vs_green_drift": abs(h.value - lG.value) / lG.value,
        "guivarch_margin": h.value - lX.value * D.value,
        "guivarch_combined_stderr": combined,
        "guivarch_holds": h.value <= lX.value * D.value + combined,
    }


def fundamental_report(lab: GreenLab, steps: int = 400, count: int = 10_000, seed: int = 1,
                       entropy_grid=(16, 32, 48, 64, 96, 128), entropy_count: int = 2000,
                       R_critical: int = 60) -> FundamentalReport:
    """Drift (graph and Green), entropy and critical exponent from one seed."""
    if lab.spectral is None:
        lab.spectral_radius_estimate()
    paths = simulate_paths(lab.chain, steps, count, seed, checkpoints=(steps // 2,))
    lX = estimate_drift(lab, paths, "graph")
    lG = estimate_drift(lab, paths, "green")
    ent_steps = max(entropy_grid)
    epaths = simulate_paths(lab.chain, ent_steps, entropy_count, seed + 1,
                            checkpoints=tuple(entropy_grid))
    h = estimate_entropy(lab, epaths, list(entropy_grid))
    D = critical_exponent(lab.graph, R_critical)
    exc = excursion_stats(lab, paths, lX)
    return FundamentalReport(lX, lG, h, D, exc, fundamental_checks(lX, lG, h, D))
