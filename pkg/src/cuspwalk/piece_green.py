"""Green function of the cusped-graph walk via the tree of pieces.

Free-generator edges are cut edges, so for x, y in different pieces

    G(x, y) = F(x, u1) * U^k * prod_i F(v_i, u_{i+1}) * G(v_k, y)

where u_i -> v_i are the crossings and U = F(u, v) is the same for every
crossing (left-invariance plus the automorphism b -> b^-1).  Inside one
piece the walk is traced: an excursion through one of the two bridges at a
depth-0 vertex is a self-loop of weight p_b*U, and one that never returns
is killing.  The traced chain on H x {0..D} is translation invariant in H,
so its Green function is computed by a Fourier transform in H and a
tridiagonal solve in depth for every frequency.

The lattice is periodized to Z_W^rank; values are accurate for offsets
well inside the period.  Beyond an anchor offset the table is replaced by
a power law G ~ |delta|^s fitted per depth pair on a log-spaced window
below the anchor (the decay is a clean power law there, s close to -2 for
H = Z).  Depths above D are removed (killing), which slightly
underestimates G; both truncations are checked against direct
propagation in the tests.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .cusped_graph import Vertex
from .walk_kernel import WeightedChain


class TableRange(ValueError):
    """Offset outside the periodized table."""


def dirichlet(r: int, x: np.ndarray) -> np.ndarray:
    """sum_{|j| <= r} e^{ijx} (real)."""
    s = np.sin(x / 2)
    out = np.full(x.shape, 2.0 * r + 1)
    nz = np.abs(s) > 1e-12
    out[nz] = np.sin((r + 0.5) * x[nz]) / s[nz]
    return out


def odd_sum(r: int, x: np.ndarray) -> np.ndarray:
    """sum over odd u with |u| <= r of e^{iux} (real)."""
    if r < 1:
        return np.zeros_like(x)
    M = (r - 1) // 2
    s = np.sin(x)
    out = np.full(x.shape, 2.0 * (M + 1))
    nz = np.abs(s) > 1e-12
    out[nz] = np.sin(2 * (M + 1) * x[nz]) / s[nz]
    # x near pi: sin(2(M+1)x)/sin(x) -> -2(M+1) at x = pi
    near_pi = (~nz) & (np.abs(np.cos(x) + 1) < 1e-6)
    out[near_pi] = -2.0 * (M + 1)
    return out


def ball_symbol(rank: int, r: int, thetas) -> np.ndarray:
    """Fourier symbol of the indicator of the l1-ball of radius r in Z^rank."""
    if rank == 1:
        return dirichlet(r, thetas[0])
    t1, t2 = thetas
    al, be = (t1 + t2) / 2, (t1 - t2) / 2
    even = dirichlet(r // 2, 2 * al) * dirichlet(r // 2, 2 * be)
    return even + odd_sum(r, al) * odd_sum(r, be)


def thomas(sub, diag, sup, rhs):
    """Solve tridiagonal systems batched along the last axis.

    ``diag`` has shape (D+1, B); ``sub[i]`` multiplies x[i] in row i+1 and
    ``sup[i]`` multiplies x[i+1] in row i.
    """
    n = diag.shape[0]
    cp = np.empty((max(n - 1, 0),) + diag.shape[1:], dtype=np.result_type(diag, rhs))
    dp = np.empty(diag.shape, dtype=cp.dtype)
    dp[0] = rhs[0] / diag[0]
    if n > 1:
        cp[0] = sup[0] / diag[0]
    for i in range(1, n):
        den = diag[i] - sub[i - 1] * cp[i - 1]
        if i < n - 1:
            cp[i] = sup[i] / den
        dp[i] = (rhs[i] - sub[i - 1] * dp[i - 1]) / den
    x = dp
    for i in range(n - 2, -1, -1):
        x[i] = dp[i] - cp[i] * x[i + 1]
    return x


@dataclass
class PieceSymbols:
    """Fourier symbols of the within-piece kernel, one value per frequency.

    ``lat[n]`` is the same-depth symbol at depth n, ``up[n]`` the n -> n+1
    symbol and ``dn[n]`` the n+1 -> n symbol.
    """
    lat: np.ndarray
    up: np.ndarray
    dn: np.ndarray


class PieceGreen:
    """Green function G(x, y) of the chain, evaluated through pieces.

    Parameters
    ----------
    chain : WeightedChain
    width : period W of the lattice grid (per coordinate)
    depth : deepest depth D kept in the traced chain
    guard_depth : also cap D where the lateral reach approaches the period
    """

    def __init__(self, chain: WeightedChain, width: int | None = None, depth: int = 22,
                 guard_depth: bool = True):
        self.chain = chain
        self.group = chain.group
        self.params = chain.params
        self.rank = self.group.rank
        if width is None:
            width = 2**18 if self.rank == 1 else 1024
        self.W = width
        # lateral reach at depth n is a^n; beyond about W/16 the periodized
        # grid wraps around, so deeper rows are not kept
        self.D = min(depth, self.params.n_max - 1)
        if guard_depth:
            self.D = min(self.D, self.max_depth(chain, width))
        self.deg = self.group.degree
        self.p_b = 1.0 / (float(self.params.p) * self.deg)
        self._thetas = self._grid()
        self.sym = self._symbols()
        self._R00 = self._solve_row(0, 0.0)[0]
        self.U = self._solve_U()
        self.S = 2 * self.p_b * self.U
        self._tables: dict[int, np.ndarray] = {}
        self._diag = None
        # offsets with l1-norm above the anchor use the fitted tail
        self.anchor = max(2, self.W // (128 if self.rank == 1 else 16))
        self._tails: dict[tuple[int, int], tuple[float, float]] = {}
        self.extrapolated = 0

    @staticmethod
    def max_depth(chain: WeightedChain, width: int) -> int:
        """Deepest depth whose horizontal reach stays below width/16."""
        n = 0
        while chain.graph.cap(n + 1) * 16 <= width:
            n += 1
        return n

    # -- spectral set-up ----------------------------------------------------

    def _grid(self):
        th = 2 * np.pi * np.arange(self.W) / self.W
        if self.rank == 1:
            return (th,)
        t1, t2 = np.meshgrid(th, th, indexing="ij")
        return (t1.ravel(), t2.ravel())

    def _symbols(self) -> PieceSymbols:
        ch, P, D = self.chain, self.params, self.D
        th = self._thetas
        B = th[0].shape[0]
        lat = np.zeros((D + 1, B))
        up = np.zeros((D, B))
        dn = np.zeros((D, B))
        ball = {}

        def sym(r):
            if r not in ball:
                ball[r] = ball_symbol(self.rank, r, th)
            return ball[r]

        for kind, dn_, r, count, w in ch.move_classes(0):
            if kind == "cayley":
                # the 2*rank lattice generators; the two free ones are bridges
                lat[0] = float(w) * (sym(1) - 1)
            else:
                up[0] = float(w) * sym(r)
        for n in range(1, D + 1):
            for kind, dn_, r, count, w in ch.move_classes(n):
                if kind == "down":
                    dn[n - 1] = float(w) * sym(r)
                elif kind == "up" and n < D:
                    up[n] = float(w) * sym(r)
                elif kind == "lateral":
                    lat[n] = float(w) * (sym(r) - 1)
        return PieceSymbols(lat, up, dn)

    def _solve_row(self, n1: int, S: float) -> np.ndarray:
        """Fourier row e_{n1}^T (I - K)^{-1}, shape (D+1, B)."""
        s = self.sym
        diag = 1.0 - s.lat
        diag[0] = diag[0] - S
        # (I-K)^T x = e_{n1}: row n of the transpose has K[n-1,n] = up[n-1]
        # below the diagonal and K[n+1,n] = dn[n] above it.
        rhs = np.zeros_like(diag)
        rhs[n1] = 1.0
        return thomas(-s.up, diag, -s.dn, rhs)

    def traced_return(self, U: float) -> float:
        """G_T(o, o) of the traced piece chain as a function of U."""
        R = self._R00
        return float(np.mean(R / (1.0 - 2 * self.p_b * U * R)))

    def _solve_U(self) -> float:
        pb = self.p_b

        def f(U):
            return U - pb / (1.0 / self.traced_return(U) + pb * U)

        return brentq(f, 0.0, 1.0 - 1e-12, xtol=1e-15, rtol=1e-14)

    # -- real-space tables ----------------------------------------------

    def table(self, n1: int) -> np.ndarray:
        """G_T((0, n1), (delta, n2)) for all n2 and periodized offsets.

        Shape (D+1, W) for rank 1 and (D+1, W, W) for rank 2.
        """
        if n1 > self.D:
            raise TableRange(f"depth {n1} beyond table depth {self.D}")
        if n1 not in self._tables:
            row = self._solve_row(n1, self.S)
            shape = (self.D + 1,) + (self.W,) * self.rank
            row = row.reshape(shape)
            axes = tuple(range(1, self.rank + 1))
            # symbols are real and even, so the inverse transform is real
            tab = np.real(np.fft.ifftn(row, axes=axes))
            self._tables[n1] = tab
        return self._tables[n1]

    def diag(self, n: int) -> float:
        """G((h, n), (h, n)) for any vertex at depth n."""
        if self._diag is None:
            self._diag = {}
        if n not in self._diag:
            self._diag[n] = float(np.mean(self._solve_row(n, self.S)[n]))
        return self._diag[n]

    def _axis_point(self, r: int) -> tuple:
        return (r,) + (0,) * (self.rank - 1)

    def tail(self, n1: int, n2: int) -> tuple[float, float]:
        """(log G at the anchor, power-law slope) for offsets beyond the anchor."""
        key = (n1, n2)
        if key not in self._tails:
            A = self.anchor
            r = np.unique(np.geomspace(max(1, A // 8), A, 8).astype(int))
            vals = np.array([self._table_value(n1, n2, self._axis_point(int(k))) for k in r])
            if np.any(vals <= 0):
                raise TableRange(f"nonpositive table values for depths {key}")
            slope = np.polyfit(np.log(r), np.log(vals), 1)[0]
            self._tails[key] = (float(np.log(vals[-1])), float(slope))
        return self._tails[key]

    def _table_value(self, n1: int, n2: int, delta) -> float:
        W = self.W
        if n1 > 0 and n2 == 0:
            # reversibility: m(x) G(x, y) = m(y) G(y, x), so depth-0 rows
            # also serve walks that end at depth 0
            tab = self.table(0)
            idx = tuple((-c) % W for c in delta)
            m = self.chain.m_float
            return float(tab[(n1,) + idx]) * m[0] / m[n1]
        tab = self.table(n1)
        idx = tuple(c % W for c in delta)
        return float(tab[(n2,) + idx])

    def _lookup(self, n1: int, n2: int, delta) -> float:
        if n1 > self.D or n2 > self.D:
            raise TableRange(f"depth {max(n1, n2)} beyond table depth {self.D}")
        r = sum(abs(c) for c in delta)
        if r <= self.anchor:
            return self._table_value(n1, n2, delta)
        self.extrapolated += 1
        log_a, slope = self.tail(n1, n2)
        return float(np.exp(log_a + slope * np.log(r / self.anchor)))

    def piece_green(self, n1: int, n2: int, delta) -> float:
        """Green function between (0, n1) and (delta, n2) in one piece."""
        return self._lookup(n1, n2, tuple(delta))

    # -- full graph -------------------------------------------------------

    def log_green(self, x: Vertex, y: Vertex) -> float:
        grp = self.group
        u = grp.mul(grp.inverse(x.element), y.element)
        hA, steps = self.chain.graph.route(u)
        if not steps:
            return np.log(self._lookup(x.depth, y.depth, hA))
        g00 = self.diag(0)
        out = np.log(self._lookup(x.depth, 0, hA) / g00)
        nb = 0
        for idx, (j, h) in enumerate(steps):
            nb += abs(j)
            if idx == len(steps) - 1:
                out += np.log(self._lookup(0, y.depth, h))
            else:
                out += np.log(self._lookup(0, 0, h) / g00)
        return out + nb * np.log(self.U)

    def green(self, x: Vertex, y: Vertex) -> float:
        return float(np.exp(self.log_green(x, y)))

    def first_passage(self, x: Vertex, y: Vertex) -> float:
        """F(x, y) = G(x, y) / G(y, y)."""
        if x == y:
            return 1.0
        return float(np.exp(self.log_green(x, y) - np.log(self.diag(y.depth))))
