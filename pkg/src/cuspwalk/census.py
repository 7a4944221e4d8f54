"""Exact counts and uniform samplers for balls of the cusped graph.

Distances from (e,0) split over pieces (see :mod:`cusped_graph`), so the
generating functions in z^distance factor:

* H-part at depth n:   Q_n(z) = sum_{h in H} z^{f_n(|h|)},  f_n = piece_distance(0, n, .)
* free part:           B(z)   = 2z / (1 - z)               (b^j, j != 0)
* coset reps c:        C(z)   = 1 + Q_0 B / (1 - (Q_0 - 1) B)
* orbit points Gamma:  C(z) Q_0(z)
* all vertices:        C(z) sum_n Q_n(z)

Coefficients are Python integers (exact).  Sampling draws big integers
with :class:`random.Random`, so it is exact and reproducible.
"""
from __future__ import annotations

import random
from bisect import bisect_right
from math import isqrt

from .cusped_graph import CuspedGraph, Vertex
from .group_model import lattice_ball_size


def _mul(a: list[int], b: list[int], R: int) -> list[int]:
    out = [0] * (R + 1)
    for i, x in enumerate(a[: R + 1]):
        if x:
            for j, y in enumerate(b[: R + 1 - i]):
                out[i + j] += x * y
    return out


def _inv(a: list[int], R: int) -> list[int]:
    """1/a for integer series with a[0] = 1."""
    if a[0] != 1:
        raise ValueError("series must start with 1")
    out = [0] * (R + 1)
    out[0] = 1
    for k in range(1, R + 1):
        out[k] = -sum(a[j] * out[k - j] for j in range(1, k + 1) if j < len(a))
    return out


def _weighted_choice(rnd: random.Random, weights: list[int]) -> int:
    total = sum(weights)
    if total <= 0:
        raise ValueError("no mass to sample from")
    x = rnd.randrange(total)
    for i, w in enumerate(weights):
        if x < w:
            return i
        x -= w
    raise AssertionError("unreachable")


def lattice_point(rank: int, r: int, k: int) -> tuple:
    """The k-th point (0 <= k < sphere size) of the l1-sphere of radius r."""
    if r == 0:
        return (0,) * rank
    if rank == 1:
        return (r,) if k == 0 else (-r,)
    q, i = divmod(k, r)
    x, y = r - i, i
    for _ in range(q):
        x, y = -y, x
    return (x, y)


def sphere_size(rank: int, r: int) -> int:
    return lattice_ball_size(rank, r) - lattice_ball_size(rank, r - 1)


class BallCensus:
    """Exact distance census around (e,0) up to radius R."""

    def __init__(self, graph: CuspedGraph, R: int):
        if R < 0:
            raise ValueError("radius must be nonnegative")
        self.graph = graph
        self.group = graph.group
        self.rank = self.group.rank
        self.R = R
        # radial breakpoints: _rmax[n][d] = largest |h| with f_n(|h|) <= d
        self._rmax = [self._breakpoints(n) for n in range(R + 1)]
        self.Q = [self._q_series(n) for n in range(R + 1)]
        self.B = [0] + [2] * R
        A = list(self.Q[0])
        A[0] -= 1
        self.A = A
        AB = _mul(A, self.B, R)
        one_minus = [1] + [-c for c in AB[1:]]
        self.T = _inv(one_minus, R)                 # 1 / (1 - A B)
        self.QB = _mul(self.Q[0], self.B, R)
        rest = _mul(self.QB, self.T, R)
        self.C = [1 + rest[0]] + rest[1:]           # coset representatives
        self.orbit = _mul(self.C, self.Q[0], R)     # depth-0 vertices
        self.by_depth = [_mul(self.C, q, R) for q in self.Q]
        self.vertices = [sum(col) for col in zip(*self.by_depth)]

    # -- counts -----------------------------------------------------------

    def _breakpoints(self, n: int) -> list[int]:
        """For d = 0..R the largest radius r with f_n(r) <= d (-1 if none)."""
        g = self.graph
        out = []
        for d in range(self.R + 1):
            if g.piece_distance(0, n, 0) > d:
                out.append(-1)
                continue
            lo, hi = 0, 1
            while g.piece_distance(0, n, hi) <= d:
                lo, hi = hi, 2 * hi
            while hi - lo > 1:
                mid = (lo + hi) // 2
                if g.piece_distance(0, n, mid) <= d:
                    lo = mid
                else:
                    hi = mid
            out.append(lo)
        return out

    def _q_series(self, n: int) -> list[int]:
        rm = self._rmax[n]
        out = []
        prev = 0
        for d in range(self.R + 1):
            tot = lattice_ball_size(self.rank, rm[d]) if rm[d] >= 0 else 0
            out.append(tot - prev)
            prev = tot
        return out

    def orbit_ball(self, n: int) -> int:
        """#(Gamma x {0} inside B_X((e,0), n))."""
        return sum(self.orbit[: n + 1])

    def vertex_ball(self, n: int) -> int:
        return sum(self.vertices[: n + 1])

    def coset_sphere(self, n: int) -> int:
        """Number of cosets cH whose nearest point to e is at distance n."""
        return self.C[n]

    # -- uniform sampling -------------------------------------------------

    def sample_h(self, n: int, d: int, rnd: random.Random) -> tuple:
        """Uniform lattice offset h with f_n(|h|) = d."""
        rm = self._rmax[n]
        hi = rm[d]
        lo = rm[d - 1] if d >= 1 else -1
        base = lattice_ball_size(self.rank, lo) if lo >= 0 else 0
        count = lattice_ball_size(self.rank, hi) - base
        if count <= 0:
            raise ValueError(f"no offsets at depth {n} with piece distance {d}")
        j = base + rnd.randrange(count)
        # radius r with ball(r-1) <= j < ball(r)
        if self.rank == 1:
            r = (j + 1) // 2
        else:
            r = max(0, (isqrt(2 * j - 1) - 1) // 2) if j > 0 else 0
            while lattice_ball_size(2, r) <= j:
                r += 1
            while r > 0 and lattice_ball_size(2, r - 1) > j:
                r -= 1
        k = j - lattice_ball_size(self.rank, r - 1) if r > 0 else 0
        return lattice_point(self.rank, r, k)

    def _sample_tail(self, d: int, rnd: random.Random) -> tuple:
        """Uniform word h1 b^j2 h2 b^j3 ... (nonzero h) of total length d."""
        grp = self.group
        out = ()
        while d > 0:
            w = []
            splits = []
            for a in range(1, d):
                for b in range(1, d - a + 1):
                    c = self.A[a] * self.B[b] * self.T[d - a - b]
                    if c:
                        w.append(c)
                        splits.append((a, b))
            a, b = splits[_weighted_choice(rnd, w)]
            h = self.sample_h(0, a, rnd)
            j = b if rnd.randrange(2) else -b
            out = grp.mul(grp.mul(out, grp.h_element(h)), grp.free_element(j))
            d -= a + b
        return out

    def sample_coset(self, d: int, rnd: random.Random) -> tuple:
        """Uniform coset representative at entry distance d."""
        if d == 0:
            return ()
        grp = self.group
        w, splits = [], []
        for a in range(0, d):
            for b in range(1, d - a + 1):
                c = self.Q[0][a] * self.B[b] * self.T[d - a - b]
                if c:
                    w.append(c)
                    splits.append((a, b))
        a, b = splits[_weighted_choice(rnd, w)]
        h0 = self.sample_h(0, a, rnd)
        j = b if rnd.randrange(2) else -b
        head = grp.mul(grp.h_element(h0), grp.free_element(j))
        return grp.mul(head, self._sample_tail(d - a - b, rnd))

    def sample_vertex(self, d: int, rnd: random.Random, depth0: bool = False) -> Vertex:
        """Uniform vertex on the sphere of radius d (orbit sphere if depth0)."""
        if d > self.R:
            raise ValueError(f"radius {d} beyond census radius {self.R}")
        depths = [0] if depth0 else range(d + 1)
        w, keys = [], []
        for n in depths:
            q = self.Q[n]
            for i in range(d + 1):
                c = self.C[i] * q[d - i]
                if c:
                    w.append(c)
                    keys.append((n, i))
        n, i = keys[_weighted_choice(rnd, w)]
        c = self.sample_coset(i, rnd)
        h = self.sample_h(n, d - i, rnd)
        return Vertex(self.group.mul(c, self.group.h_element(h)), n)

    def sample_ball(self, count: int, seed: int, radius: int | None = None,
                    depth0: bool = False) -> list:
        """``count`` independent uniform vertices of the ball of radius ``radius``."""
        radius = self.R if radius is None else radius
        rnd = random.Random(seed)
        sizes = self.orbit if depth0 else self.vertices
        w = sizes[: radius + 1]
        cum = []
        tot = 0
        for x in w:
            tot += x
            cum.append(tot)
        out = []
        for _ in range(count):
            d = bisect_right(cum, rnd.randrange(tot))
            out.append(self.sample_vertex(d, rnd, depth0=depth0))
        return out
