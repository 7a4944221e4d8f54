"""The cusped graph X over Gamma = H * Z and its metric geometry.

Vertices are ``Vertex(element, depth)``.  Depth-0 vertices form the Cayley
graph; the horoball over a coset cH has vertices (c h, n), n >= 1, and
horizontal reach floor(a^n) at depth n.

Because Gamma = H * Z, the Cayley graph is a tree of H-copies joined by
free-generator edges.  Call a *piece* one coset cH together with its
horoball.  Free-generator edges are cut edges between pieces, so every
distance splits into within-piece distances plus one unit per crossing.
Within a piece the distance has a closed form (``piece_distance``), which
gives an exact distance oracle on the infinite graph.  The explicit
``CuspedBall`` + BFS route is kept as an independent check.
"""
from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from math import ceil, floor
from typing import NamedTuple

import numpy as np

from .group_model import GroupModel, H_FACTOR, FREE_FACTOR, BudgetExceeded


class Vertex(NamedTuple):
    element: tuple
    depth: int


class VertexNotInBall(KeyError):
    pass


class DifferentHoroball(ValueError):
    pass


def vertex_key(v: Vertex):
    """Ordering used for deterministic tie-breaking: (depth, normal form)."""
    return (v.depth, v.element)


class CuspedGraph:
    """Oracle for the infinite cusped graph with parameter a."""

    def __init__(self, group: GroupModel, a=2, depth_cap: int = 64):
        self.group = group
        self.a = Fraction(a)
        self.depth_cap = depth_cap
        self._caps = [1]
        self._up = [0]      # _up[k] = sum_{j=1}^k cap(j)

    # -- horizontal reach -------------------------------------------------

    def cap(self, n: int) -> int:
        """floor(a^n): horizontal reach of an edge at depth n (or entering n)."""
        while len(self._caps) <= n:
            k = len(self._caps)
            self._caps.append(floor(self.a**k))
            self._up.append(self._up[-1] + self._caps[-1])
        return self._caps[n]

    def up_reach(self, n1: int, k: int) -> int:
        """Largest horizontal displacement of a monotone climb from n1 to k."""
        self.cap(k)
        return self._up[k] - self._up[n1]

    # -- neighbours -------------------------------------------------------

    def neighbors(self, v: Vertex) -> list:
        g, n = v
        grp = self.group
        out = []
        if n == 0:
            for s in grp.generators:
                out.append(Vertex(grp.mul(g, s), 0))
            for h in grp.lattice_ball(self.cap(1)):
                out.append(Vertex(grp.mul(g, grp.h_element(h)), 1))
            return out
        for h in grp.lattice_ball(self.cap(n)):
            w = grp.mul(g, grp.h_element(h))
            out.append(Vertex(w, n - 1))
            if any(h):
                out.append(Vertex(w, n))
        if n + 1 <= self.depth_cap:
            for h in grp.lattice_ball(self.cap(n + 1)):
                out.append(Vertex(grp.mul(g, grp.h_element(h)), n + 1))
        return out

    def edge_rule(self, u: Vertex, v: Vertex):
        """Which edge rule joins u and v: 1 (Cayley), 2 (same depth),
        3 (adjacent depths) or None.  Depth-0 H-edges report rule 1."""
        grp = self.group
        diff = grp.mul(grp.inverse(u.element), v.element)
        if u.depth == 0 and v.depth == 0 and grp.word_length(diff) == 1 and len(diff) == 1:
            return 1
        if len(diff) > 1 or (diff and diff[0][0] != H_FACTOR):
            return None
        dist = grp.h_norm(diff[0][1]) if diff else 0
        if u.depth == v.depth and u.depth >= 1 and 1 <= dist <= self.cap(u.depth):
            return 2
        if abs(u.depth - v.depth) == 1 and dist <= self.cap(max(u.depth, v.depth)):
            return 3
        return None

    # -- structural distance ----------------------------------------------

    def piece_distance(self, n1: int, n2: int, delta: int) -> int:
        """Distance between (h, n1) and (h', n2) in one piece, |h^-1 h'| = delta.

        A geodesic climbs to some top depth k, moves laterally t times and
        descends; the climb and descent can absorb sum cap(j) of offset.
        """
        k = max(n1, n2)
        best = None
        while True:
            rest = delta - self.up_reach(n1, k) - self.up_reach(n2, k)
            t = 0 if rest <= 0 else -(-rest // self.cap(k))
            d = 2 * k - n1 - n2 + t
            if best is None or d < best:
                best = d
            if rest <= 0 or 2 * (k + 1) - n1 - n2 > best:
                return best
            k += 1

    def piece_distance_array(self, n1, n2, delta) -> np.ndarray:
        """Vectorized ``piece_distance`` over equal-shape integer arrays."""
        n1 = np.asarray(n1, dtype=np.int64)
        n2 = np.asarray(n2, dtype=np.int64)
        delta = np.asarray(delta, dtype=np.int64)
        kmax = int(max(n1.max(initial=0), n2.max(initial=0)))
        # climbing past depth k costs 2 per level and gains at most cap(k)
        while self.cap(kmax) < delta.max(initial=0):
            kmax += 1
        kmax += 2
        self.cap(kmax)
        up = np.array(self._up[: kmax + 1], dtype=np.int64)
        caps = np.array(self._caps[: kmax + 1], dtype=np.int64)
        best = np.full(delta.shape, np.iinfo(np.int64).max)
        top = np.maximum(n1, n2)
        for k in range(kmax + 1):
            ok = top <= k
            rest = delta - (up[k] - up[np.minimum(n1, k)]) - (up[k] - up[np.minimum(n2, k)])
            t = np.where(rest > 0, -(-rest // caps[k]), 0)
            d = 2 * k - n1 - n2 + t
            best = np.where(ok & (d < best), d, best)
        return best

    def piece_top(self, n1: int, n2: int, delta: int) -> int:
        """Smallest top depth among geodesics of ``piece_distance``."""
        target = self.piece_distance(n1, n2, delta)
        k = max(n1, n2)
        while True:
            rest = delta - self.up_reach(n1, k) - self.up_reach(n2, k)
            t = 0 if rest <= 0 else -(-rest // self.cap(k))
            if 2 * k - n1 - n2 + t == target:
                return k
            k += 1

    def route(self, u: tuple):
        """Decompose u = hA b^{j1} h1 ... b^{jr} hB.

        Returns (hA, [(j1, h1), ..., (jr, hB)]); the list is empty when
        u lies in H.  H-values are lattice tuples (zero when absent).
        """
        zero = self.group.zero_h
        if not u:
            return zero, []
        syl = list(u)
        hA = zero
        if syl[0][0] == H_FACTOR:
            hA = syl.pop(0)[1]
        steps = []
        i = 0
        while i < len(syl):
            f, j = syl[i]
            h = zero
            if i + 1 < len(syl):
                h = syl[i + 1][1]
            steps.append((j, h))
            i += 2
        return hA, steps

    def distance(self, x: Vertex, y: Vertex) -> int:
        grp = self.group
        u = grp.mul(grp.inverse(x.element), y.element)
        hA, steps = self.route(u)
        if not steps:
            return self.piece_distance(x.depth, y.depth, grp.h_norm(hA))
        d = self.piece_distance(x.depth, 0, grp.h_norm(hA))
        for idx, (j, h) in enumerate(steps):
            d += abs(j)
            last = idx == len(steps) - 1
            d += self.piece_distance(0, y.depth if last else 0, grp.h_norm(h))
        return d

    def depth0_distance(self, g: tuple) -> int:
        """Distance from (e,0) to (g,0)."""
        return self.distance(Vertex((), 0), Vertex(g, 0))

    def _piece_path(self, n1: int, n2: int, delta) -> list:
        """Explicit geodesic inside a piece from (0, n1) to (delta, n2).

        Returns (offset, depth) pairs; climbs greedily, then moves at the
        top depth, then descends.
        """
        delta = tuple(delta)
        k = self.piece_top(n1, n2, sum(abs(c) for c in delta))
        rem = list(delta)
        pos = [0] * len(delta)
        out = [(tuple(pos), n1)]

        def take(r):
            step = [0] * len(rem)
            for i in range(len(rem)):
                m = min(r, abs(rem[i]))
                step[i] = m if rem[i] > 0 else -m
                r -= m
            for i in range(len(rem)):
                rem[i] -= step[i]
                pos[i] += step[i]

        n = n1
        while n < k:
            n += 1
            take(self.cap(n))
            out.append((tuple(pos), n))
        while sum(map(abs, rem)) > self.up_reach(n2, k):
            take(self.cap(k))
            out.append((tuple(pos), k))
        while n > n2:
            take(self.cap(n))
            n -= 1
            out.append((tuple(pos), n))
        return out

    def geodesic(self, x: Vertex, y: Vertex) -> list:
        """A deterministic geodesic from x to y (list of vertices)."""
        grp = self.group
        g = x.element
        u = grp.mul(grp.inverse(g), y.element)
        hA, steps = self.route(u)
        path = []
        base = ()

        def emit(pairs, base):
            for off, n in pairs:
                path.append(Vertex(grp.mul(g, grp.mul(base, grp.h_element(off))), n))

        if not steps:
            emit(self._piece_path(x.depth, y.depth, hA), base)
            return _dedupe(path)
        emit(self._piece_path(x.depth, 0, hA), base)
        base = grp.h_element(hA)
        for idx, (j, h) in enumerate(steps):
            s = 1 if j > 0 else -1
            for _ in range(abs(j)):
                base = grp.mul(base, grp.free_element(s))
                path.append(Vertex(grp.mul(g, base), 0))
            last = idx == len(steps) - 1
            emit(self._piece_path(0, y.depth if last else 0, h)[1:], base)
            base = grp.mul(base, grp.h_element(h))
        return _dedupe(path)

    def horoball_distance_oracle(self, u: Vertex, v: Vertex) -> int:
        """Length of the preferred path (vertical, one horizontal edge, vertical)."""
        grp = self.group
        cu, hu = grp.split_coset(u.element)
        cv, hv = grp.split_coset(v.element)
        if cu != cv:
            raise DifferentHoroball("vertices lie over different cosets")
        d = grp.h_norm(tuple(b - a for a, b in zip(hu, hv)))
        if d == 0:
            return abs(u.depth - v.depth)
        k = max(u.depth, v.depth, ceil_log(self.a, d))
        return (k - u.depth) + 1 + (k - v.depth)

    def preferred_path(self, u: Vertex, v: Vertex) -> list:
        """Vertical climb from u, one horizontal edge at the top, vertical descent to v."""
        grp = self.group
        cu, hu = grp.split_coset(u.element)
        cv, hv = grp.split_coset(v.element)
        if cu != cv:
            raise DifferentHoroball("vertices lie over different cosets")
        d = grp.h_norm(tuple(b - a for a, b in zip(hu, hv)))
        if d == 0:
            step = 1 if v.depth >= u.depth else -1
            return [Vertex(u.element, n) for n in range(u.depth, v.depth + step, step)]
        k = max(u.depth, v.depth, ceil_log(self.a, d))
        if k == 0 and self.edge_rule(Vertex(u.element, 0), Vertex(v.element, 0)) is None:
            k = 1
        return ([Vertex(u.element, n) for n in range(u.depth, k + 1)]
                + [Vertex(v.element, n) for n in range(k, v.depth - 1, -1)])

    def preferred_path_constants(self, pairs) -> dict:
        """Largest length excess and Hausdorff distance between preferred paths
        and geodesics over the given same-horoball pairs."""
        excess = haus = 0
        for u, v in pairs:
            P = self.preferred_path(u, v)
            G = self.geodesic(u, v)
            excess = max(excess, len(P) - 1 - self.distance(u, v))
            dPG = max(min(self.distance(p, g) for g in G) for p in P)
            dGP = max(min(self.distance(p, g) for p in P) for g in G)
            haus = max(haus, dPG, dGP)
        return {"pairs": len(pairs), "length_excess": excess, "hausdorff": haus}


def horoball_pairs(group: GroupModel, span: int, count: int, seed: int,
                   max_depth: int = 8) -> list:
    """Random vertex pairs over the coset H, offsets up to ``span`` per coordinate."""
    rnd = random.Random(seed)
    out = []
    for _ in range(count):
        hu = tuple(rnd.randint(-span, span) for _ in range(group.rank))
        hv = tuple(rnd.randint(-span, span) for _ in range(group.rank))
        out.append((Vertex(group.h_element(hu), rnd.randint(0, max_depth)),
                    Vertex(group.h_element(hv), rnd.randint(0, max_depth))))
    return out


def ceil_log(a: Fraction, d: int) -> int:
    """Smallest k >= 0 with a^k >= d (exact)."""
    k = 0
    while a**k < d:
        k += 1
    return k


def _dedupe(path):
    out = []
    for v in path:
        if not out or out[-1] != v:
            out.append(v)
    return out


# -- explicit balls -------------------------------------------------------

@dataclass
class CuspedBall:
    center: Vertex
    radius: int
    margin: int
    adjacency: dict = field(repr=False)
    dist_from_center: dict = field(repr=False)
    frozen: bool = False

    @property
    def vertices(self) -> list:
        return sorted(self.adjacency, key=vertex_key)

    def inner(self) -> list:
        """Vertices within the guarantee radius R of the center."""
        return sorted((v for v, d in self.dist_from_center.items() if d <= self.radius),
                      key=vertex_key)

    def __contains__(self, v):
        return v in self.adjacency

    def __len__(self):
        return len(self.adjacency)

    def edges(self):
        out = []
        for v, nb in self.adjacency.items():
            for w in nb:
                if vertex_key(v) < vertex_key(w):
                    out.append((v, w))
        return sorted(out, key=lambda e: (vertex_key(e[0]), vertex_key(e[1])))


def build_ball(graph: CuspedGraph, center: Vertex, R: int, margin: int = 0,
               budget: int = 5_000_000) -> CuspedBall:
    """BFS ball of radius R + margin around ``center``, frozen on return."""
    if R < 0 or margin < 0:
        raise ValueError("radius and margin must be nonnegative")
    total = R + margin
    dist = {center: 0}
    frontier = [center]
    for d in range(total):
        nxt = []
        for v in frontier:
            for w in graph.neighbors(v):
                if w not in dist:
                    dist[w] = d + 1
                    nxt.append(w)
                    if len(dist) > budget:
                        raise BudgetExceeded(
                            f"ball exceeds budget {budget} at BFS layer {d + 1}, depth {w.depth}")
        frontier = nxt
    adj = {}
    for v in dist:
        adj[v] = sorted((w for w in graph.neighbors(v) if w in dist), key=vertex_key)
    return CuspedBall(center, R, margin, adj, dist, frozen=True)


def graph_distance(u: Vertex, v: Vertex, ball: CuspedBall, with_path: bool = False):
    """BFS distance inside the ball; the path breaks ties by (depth, normal form)."""
    if u not in ball:
        raise VertexNotInBall(u)
    if v not in ball:
        raise VertexNotInBall(v)
    dist = {u: 0}
    q = deque([u])
    while q:
        w = q.popleft()
        if w == v:
            break
        for z in ball.adjacency[w]:
            if z not in dist:
                dist[z] = dist[w] + 1
                q.append(z)
    if v not in dist:
        raise VertexNotInBall(v)
    if not with_path:
        return dist[v]
    path = [v]
    cur = v
    while cur != u:
        cur = min((z for z in ball.adjacency[cur] if dist.get(z) == dist[cur] - 1),
                  key=vertex_key)
        path.append(cur)
    return dist[v], path[::-1]


# -- metric helpers -------------------------------------------------------

def gromov_product(u, v, base, metric) -> float:
    """(u|v)_base = (rho(base,u) + rho(base,v) - rho(u,v)) / 2."""
    return 0.5 * (metric(base, u) + metric(base, v) - metric(u, v))


def busemann_proxy(x, y, z_far, metric) -> float:
    return metric(x, z_far) - metric(y, z_far)


def four_point_delta(d01, d02, d03, d12, d13, d23) -> float:
    """Best 4-point constant of one quadruple: half the gap between the two
    largest of the three pair sums."""
    s = sorted((d01 + d23, d02 + d13, d03 + d12))
    return 0.5 * (s[2] - s[1])


@dataclass
class HyperbolicityEstimate:
    delta_hat: float
    sample_size: int
    radius: int | None
    argmax: tuple | None = None


def estimate_delta(vertices, metric, quadruple_sample_size: int, seed: int,
                   radius: int | None = None) -> HyperbolicityEstimate:
    """Max 4-point defect over uniformly sampled quadruples of ``vertices``."""
    if quadruple_sample_size < 1:
        raise ValueError("sample size must be positive")
    verts = list(vertices)
    rng = np.random.default_rng(seed)
    idx = rng.integers(len(verts), size=(quadruple_sample_size, 4))
    cache = {}

    def d(i, j):
        key = (i, j) if i <= j else (j, i)
        if key not in cache:
            cache[key] = metric(verts[key[0]], verts[key[1]])
        return cache[key]

    best, arg = 0.0, None
    for i0, i1, i2, i3 in idx.tolist():
        val = four_point_delta(d(i0, i1), d(i0, i2), d(i0, i3), d(i1, i2), d(i1, i3), d(i2, i3))
        if val > best:
            best, arg = val, (i0, i1, i2, i3)
    arg_v = None if arg is None else tuple(verts[i] for i in arg)
    return HyperbolicityEstimate(best, quadruple_sample_size, radius, arg_v)


# -- export ----------------------------------------------------------------

def export_ball(ball: CuspedBall, group: GroupModel) -> str:
    verts = ball.vertices
    ids = {v: i for i, v in enumerate(verts)}
    lines = [f"# vertices {len(verts)}", "# id,element,depth"]
    for v in verts:
        lines.append(f"{ids[v]},{group.format(v.element)},{v.depth}")
    lines.append("# edges")
    for u, v in ball.edges():
        lines.append(f"{ids[u]},{ids[v]}")
    return "\n".join(lines) + "\n"


def import_ball(text: str, group: GroupModel):
    """Parse an exported edge list into (vertices, edge list)."""
    verts, edges = [], []
    section = None
    for line in text.splitlines():
        if line.startswith("# vertices"):
            section = "v"
            continue
        if line.startswith("# edges"):
            section = "e"
            continue
        if line.startswith("#") or not line:
            continue
        parts = line.split(",")
        if section == "v":
            verts.append(Vertex(group.parse(parts[1]), int(parts[2])))
        else:
            edges.append((int(parts[0]), int(parts[1])))
    return verts, edges
