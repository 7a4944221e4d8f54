"""Time-resolved transition probabilities p^(k)(x, y), k = 0..N.

Same decomposition as :mod:`piece_green`, but every factor is kept as a
power series in the time variable z, truncated at z^N:

* inside a piece the loop-free kernel (bridges removed) is propagated
  order by order in Fourier space;
* a depth-0 vertex gets self-loops S(z) = 2 p_b z U(z), where U(z) is the
  first-passage series across one bridge;
* U(z) itself solves U = p_b z G°(z), G°(z) being the return series of the
  piece with one bridge side removed, and is built order by order.

Coefficient k of ``series(x, y)`` is p^(k)(x, y) exactly, up to float
rounding, periodization of the lattice and the depth cap D.  Both are
harmless for k < 2*min(D, log_a(W/2)).
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy import fft as sp_fft

from .cusped_graph import Vertex
from .piece_green import PieceGreen, TableRange
from .walk_kernel import WeightedChain


def series_mul(a: np.ndarray, b: np.ndarray, n: int | None = None) -> np.ndarray:
    """Product of power series truncated to n+1 terms (1-d arrays)."""
    n = len(a) - 1 if n is None else n
    return np.convolve(a, b)[: n + 1]


def series_inv(a: np.ndarray) -> np.ndarray:
    """Reciprocal of a power series with a[0] != 0."""
    N = len(a) - 1
    out = np.zeros(N + 1)
    out[0] = 1.0 / a[0]
    for k in range(1, N + 1):
        out[k] = -np.dot(a[1: k + 1], out[k - 1:: -1][:k]) / a[0]
    return out


def _batch_mul(a: np.ndarray, b: np.ndarray, N: int) -> np.ndarray:
    """Series product along axis 0, batched over the remaining axes."""
    L = sp_fft.next_fast_len(2 * N + 2, real=True)
    a = np.moveaxis(a, 0, -1)
    b = np.moveaxis(b, 0, -1)
    fa = sp_fft.rfft(a, n=L, axis=-1)
    fb = sp_fft.rfft(b, n=L, axis=-1)
    out = sp_fft.irfft(fa * fb, n=L, axis=-1)[..., : N + 1]
    return np.ascontiguousarray(np.moveaxis(out, -1, 0))


def _batch_inv(a: np.ndarray, N: int) -> np.ndarray:
    """Reciprocal series along axis 0 by Newton doubling; a[0] must be 1."""
    y = np.zeros_like(a[:1])
    y[0] = 1.0
    m = 1
    while m < N + 1:
        m = min(2 * m, N + 1)
        ay = _batch_mul(a[:m], y, m - 1)
        corr = -ay
        corr[0] += 2.0
        y = _batch_mul(y, corr, m - 1)
    return y[: N + 1]


class GreenSeries:
    """Power series in time of the chain's transition probabilities.

    Parameters
    ----------
    chain : WeightedChain
    horizon : largest time N kept
    width : lattice period W (per coordinate)
    depth : deepest depth D kept
    """

    def __init__(self, chain: WeightedChain, horizon: int = 64,
                 width: int | None = None, depth: int = 16):
        if horizon < 0:
            raise ValueError("horizon must be nonnegative")
        if width is None:
            width = 4096 if chain.group.rank == 1 else 64
        self.chain = chain
        self.group = chain.group
        self.rank = self.group.rank
        self.N = horizon
        self.piece = PieceGreen(chain, width=width, depth=depth, guard_depth=False)
        self.W = self.piece.W
        self.D = self.piece.D
        self.p_b = self.piece.p_b
        self._free: dict[int, np.ndarray] = {}
        self._full: dict[int, np.ndarray] = {}
        self._returns: dict[int, np.ndarray] = {}
        self._tables: dict[int, np.ndarray] = {}
        self._wide: dict[tuple[int, int], np.ndarray] = {}
        self._wide_pieces: dict[int, PieceGreen] = {}
        self.max_width = 2**17
        self._build_bridge_series()
        self.series = lru_cache(maxsize=200_000)(self._series)

    # -- Fourier-space series -------------------------------------------

    def free(self, n1: int) -> np.ndarray:
        """Loop-free series from depth n1, shape (N+1, D+1, B)."""
        if n1 > self.D:
            raise TableRange(f"depth {n1} beyond table depth {self.D}")
        if n1 not in self._free:
            s, N, D = self.piece.sym, self.N, self.D
            B = s.lat.shape[1]
            r = np.zeros((N + 1, D + 1, B))
            r[0, n1] = 1.0
            for k in range(1, N + 1):
                prev = r[k - 1]
                cur = prev * s.lat
                cur[1:] += prev[:-1] * s.up
                cur[:-1] += prev[1:] * s.dn
                r[k] = cur
            self._free[n1] = r
        return self._free[n1]

    def _build_bridge_series(self):
        N, pb = self.N, self.p_b
        a = self.free(0)[:, 0, :]
        u = np.zeros(N + 2)             # u[k]: first crossing of a bridge at time k
        S = np.zeros(N + 1)             # self-loop series 2 p_b z U(z)
        y = np.zeros_like(a)            # 1 / (1 - S a) per frequency
        g = np.zeros(N + 1)             # return series of the full piece at o
        go = np.zeros(N + 1)            # same with one bridge side removed
        w = np.zeros(N + 1)
        Q = np.zeros_like(a)
        for k in range(N + 1):
            if k >= 1:
                S[k] = 2 * pb * u[k - 1]
                Q[k] = (S[1: k + 1, None] * a[k - 1:: -1][:k]).sum(0)
                y[k] = (Q[1: k + 1] * y[k - 1:: -1][:k]).sum(0)
            else:
                y[0] = 1.0
            g[k] = (a[: k + 1] * y[k:: -1]).sum(0).mean()
            if k >= 1:
                w[k] = pb * np.dot(u[:k], g[k - 1:: -1][:k])
                go[k] = g[k] - np.dot(w[1: k + 1], go[k - 1:: -1][:k])
            else:
                go[0] = g[0]
            u[k + 1] = pb * go[k]
        self.loop = S
        self._y = y
        self.g0 = g
        self.bridge = u[: N + 1]
        self.g0_inv = series_inv(g)

    def full(self, n1: int) -> np.ndarray:
        """Series of the whole chain from (o, n1) to the same piece, Fourier space."""
        if n1 not in self._full:
            N = self.N
            if n1 == 0:
                r = _batch_mul(self._y[:, None, :], self.free(0), N)
            else:
                f = self.free(n1)
                lead = _batch_mul(f[:, 0, :], self.loop[:, None] * np.ones_like(f[:, 0, :]), N)
                r = f + _batch_mul(lead[:, None, :], self.full(0), N)
            self._full[n1] = r
            self._returns[n1] = r[:, n1, :].mean(axis=1)
        return self._full[n1]

    def return_series(self, n: int) -> np.ndarray:
        """p^(k)(v, v) for a vertex v at depth n, k = 0..N."""
        if n not in self._returns:
            self.full(n)
            if n > 0:
                self._full.pop(n, None)
                self._free.pop(n, None)
        return self._returns[n]

    # -- real-space tables ----------------------------------------------

    def table(self, n1: int) -> np.ndarray:
        """p^(k)((o, n1), (delta, n2)), shape (N+1, D+1, W[, W])."""
        if n1 not in self._tables:
            r = self.full(n1)
            shape = r.shape[:2] + (self.W,) * self.rank
            axes = tuple(range(2, 2 + self.rank))
            self._tables[n1] = np.real(np.fft.ifftn(r.reshape(shape), axes=axes))
            if n1 > 0:
                # Fourier-space arrays are only needed again through depth 0
                self._full.pop(n1, None)
                self._free.pop(n1, None)
        return self._tables[n1]

    def column(self, n1: int, n2: int, delta) -> np.ndarray:
        """Series of p^(k)((o, n1), (delta, n2)) within one piece."""
        if n2 > self.D or n1 > self.D:
            raise TableRange(f"depth {max(n1, n2)} beyond table depth {self.D}")
        W = self.W
        m = self.chain.m_float
        if any(8 * abs(c) >= W for c in delta):
            # near W/2 the periodic images are as large as the value itself
            if n1 > 0 and n2 == 0:
                return self.wide_column(n1, tuple(-c for c in delta)) * (m[0] / m[n1])
            if n1 != 0:
                raise TableRange(f"offset {tuple(delta)} outside period {W}")
            return self.wide_column(n2, delta)
        if n1 > 0 and n2 == 0:
            # termwise reversibility m(x) p^(k)(x, y) = m(y) p^(k)(y, x)
            idx = tuple((-c) % W for c in delta)
            return self.table(0)[(slice(None), n1) + idx] * (m[0] / m[n1])
        idx = tuple(c % W for c in delta)
        return self.table(n1)[(slice(None), n2) + idx]

    def wide_column(self, n2: int, delta) -> np.ndarray:
        """Column from depth 0 on a wider grid W' >= 8 |delta| (rank 1).

        Only the row for target depth n2 is computed; a few rows are cached.
        """
        r = abs(delta[0]) if self.rank == 1 else None
        Wp = self.W
        while r is not None and Wp < 8 * r and Wp < self.max_width:
            Wp *= 2
        if r is None or 8 * r > Wp:
            raise TableRange(f"offset {tuple(delta)} beyond the widest grid {self.max_width}")
        key = (n2, Wp)
        if key not in self._wide:
            if len(self._wide) >= 4:
                self._wide.pop(next(iter(self._wide)))
            self._wide[key] = self._wide_row(n2, Wp)
        return self._wide[key][:, abs(delta[0])]

    def _wide_row(self, n2: int, Wp: int) -> np.ndarray:
        piece = self._wide_pieces.get(Wp)
        if piece is None:
            piece = self._wide_pieces[Wp] = PieceGreen(self.chain, width=Wp, depth=self.D, guard_depth=False)
        s, N = piece.sym, self.N
        cur = np.zeros((self.D + 1, Wp))
        cur[0] = 1.0
        a = np.zeros((N + 1, Wp))
        col = np.zeros((N + 1, Wp))
        a[0], col[0] = cur[0], cur[n2]
        for k in range(1, N + 1):
            nxt = cur * s.lat
            nxt[1:] += cur[:-1] * s.up
            nxt[:-1] += cur[1:] * s.dn
            cur = nxt
            a[k], col[k] = cur[0], cur[n2]
        # renewal at depth 0: r = col + (S a) * r, order by order
        Q = _batch_mul(self.loop[:, None] * np.ones((1, Wp)), a, N)
        r = np.empty_like(col)
        for k in range(N + 1):
            r[k] = col[k]
            if k:
                r[k] += np.einsum("kw,kw->w", Q[1: k + 1], r[k - 1:: -1][:k])
        # the symbols are real and even, so the inverse transform is a
        # real cosine sum, indexed by |delta|
        return sp_fft.rfft(r, axis=1).real / Wp

    def column_sum(self, n1: int, n2: int, deltas) -> np.ndarray:
        out = np.zeros(self.N + 1)
        for d in deltas:
            out += self.column(n1, n2, d)
        return out

    # -- whole graph ------------------------------------------------------

    def _bridge_power(self, k: int) -> np.ndarray:
        out = np.zeros(self.N + 1)
        out[0] = 1.0
        for _ in range(k):
            out = series_mul(out, self.bridge)
        return out

    @lru_cache(maxsize=100_000)
    def _prefix(self, n1: int, hA: tuple, steps: tuple) -> np.ndarray:
        """First-passage series from (o, n1) to the entry vertex reached
        after the crossings in ``steps``, the last crossing included."""
        if len(steps) == 1:
            out = series_mul(self.column(n1, 0, hA), self.g0_inv)
        else:
            out = self._prefix(n1, hA, steps[:-1])
            j_prev, h_prev = steps[-2]
            out = series_mul(out, series_mul(self.column(0, 0, h_prev), self.g0_inv))
        return series_mul(out, self._bridge_power(abs(steps[-1][0])))

    def locate(self, x: Vertex, y: Vertex):
        """(x.depth, first offset, crossings, last offset) of the route x -> y."""
        grp = self.group
        u = grp.mul(grp.inverse(x.element), y.element)
        hA, steps = self.chain.graph.route(u)
        return hA, tuple(steps)

    def _series(self, x: Vertex, y: Vertex) -> np.ndarray:
        hA, steps = self.locate(x, y)
        if not steps:
            return self.column(x.depth, y.depth, hA)
        pre = self._prefix(x.depth, tuple(hA), steps)
        return series_mul(pre, self.column(0, y.depth, steps[-1][1]))

    def node_series(self, x: Vertex, y: Vertex) -> np.ndarray:
        """sum over y' in the m-node of y of p^(k)(x, y')."""
        hA, steps = self.locate(x, y)
        d = y.depth
        last = tuple(steps[-1][1]) if steps else tuple(hA)
        if d == 0:
            lattice = [last] + [tuple(c + s[0][1][i] for i, c in enumerate(last))
                                for s in self.group.generators[: 2 * self.rank]]
        else:
            r = self.chain.graph.cap(d)
            lattice = [tuple(c + v for c, v in zip(last, off))
                       for off in self.group.lattice_ball(r)]
        if steps:
            pre = self._prefix(x.depth, tuple(hA), steps)
            out = series_mul(pre, self.column_sum(0, d, lattice))
        else:
            out = self.column_sum(x.depth, d, lattice)
        if d == 0:
            for s in self.group.generators[2 * self.rank:]:
                out = out + self.series(x, Vertex(self.group.mul(y.element, s), 0))
        return out

    def green_partial(self, x: Vertex, y: Vertex) -> np.ndarray:
        """Partial sums sum_{k <= n} p^(k)(x, y), n = 0..N."""
        return np.cumsum(self.series(x, y))
