"""Vectorized simulation of the chain.

A position is (piece, offset, depth): the piece is a coset representative
c (normal form not ending in an H-syllable), the vertex is (c * h, depth)
with h the lattice offset.  Moves inside a piece are array operations;
crossing a free-generator edge goes through a small cached table.

Randomness: path i uses its own stream SeedSequence(seed, spawn_key=(i,)),
drawing two uniforms per step, so a path does not depend on how many
other paths are simulated or how they are chunked.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cusped_graph import Vertex
from .walk_kernel import WeightedChain


class PieceTable:
    """Registry of visited pieces with cached bridge transitions."""

    def __init__(self, chain: WeightedChain):
        self.group = chain.group
        self.graph = chain.graph
        self.reps: list[tuple] = [()]
        self.index: dict[tuple, int] = {(): 0}
        self.entry_dist: list[int] = [0]      # distance origin -> entry point
        self._cross: dict = {}

    def piece_id(self, rep: tuple) -> int:
        i = self.index.get(rep)
        if i is None:
            i = len(self.reps)
            self.reps.append(rep)
            self.index[rep] = i
            self.entry_dist.append(self.graph.depth0_distance(rep))
        return i

    def cross(self, pid: int, off: tuple, s: int):
        """Move across the free edge b^s from (rep * off, 0)."""
        key = (pid, off, s)
        hit = self._cross.get(key)
        if hit is None:
            grp = self.group
            g = grp.mul(self.reps[pid], grp.h_element(off))
            g = grp.mul(g, grp.free_element(s))
            rep, h = grp.split_coset(g)
            hit = (self.piece_id(rep), h)
            self._cross[key] = hit
        return hit

    def element(self, pid: int, off) -> tuple:
        return self.group.mul(self.reps[pid], self.group.h_element(tuple(int(c) for c in off)))

    def locate(self, element: tuple):
        rep, h = self.group.split_coset(element)
        return self.piece_id(rep), h


class LatticeSampler:
    """Uniform index -> point maps for l1-balls, vectorized."""

    def __init__(self, rank: int):
        self.rank = rank
        self._cum: dict[int, np.ndarray] = {}

    def point(self, r: np.ndarray, j: np.ndarray) -> np.ndarray:
        """The j-th point (lexicographic) of the ball of radius r; shapes (B,)."""
        if self.rank == 1:
            return (j - r)[:, None]
        out = np.empty((len(j), 2), dtype=np.int64)
        for rad in np.unique(r):
            sel = r == rad
            cum = self._cum.get(int(rad))
            if cum is None:
                i = np.arange(-rad, rad + 1)
                cum = np.concatenate([[0], np.cumsum(2 * (rad - np.abs(i)) + 1)])
                self._cum[int(rad)] = cum
            jj = j[sel]
            row = np.searchsorted(cum, jj, side="right") - 1
            i = row - rad
            width = rad - np.abs(i)
            out[sel, 0] = i
            out[sel, 1] = jj - cum[row] - width
        return out


@dataclass
class TrajectoryBatch:
    start: Vertex
    steps: int
    count: int
    seed: int
    stride: int
    times: np.ndarray            # checkpoint times
    piece: np.ndarray            # (M, T) int32
    offset: np.ndarray           # (M, T, rank) int64
    depth: np.ndarray            # (M, T) int16
    table: PieceTable = field(repr=False)

    def vertex(self, i: int, t_index: int) -> Vertex:
        el = self.table.element(int(self.piece[i, t_index]), self.offset[i, t_index])
        return Vertex(el, int(self.depth[i, t_index]))

    def path(self, i: int) -> list:
        return [self.vertex(i, k) for k in range(len(self.times))]

    def final(self) -> list:
        return [self.vertex(i, -1) for i in range(self.count)]

    def max_depth_profile(self) -> np.ndarray:
        return self.depth.max(axis=1)


class Walker:
    """Vectorized sampler for the chain's rows (class choice, then uniform
    target within the class)."""

    def __init__(self, chain: WeightedChain):
        self.chain = chain
        self.group = chain.group
        self.rank = chain.group.rank
        P = chain.params
        self.depth_max = P.n_max - 1
        D = self.depth_max
        # per-depth class thresholds and radii
        self.t_first = np.zeros(D + 1)      # depth 0: Cayley; n>=1: down
        self.t_second = np.ones(D + 1)      # n>=1: down+up
        self.r_down = np.zeros(D + 1, dtype=np.int64)
        self.r_up = np.zeros(D + 1, dtype=np.int64)
        self.c_down = np.zeros(D + 1, dtype=np.int64)
        self.c_up = np.zeros(D + 1, dtype=np.int64)
        for n in range(D + 1):
            cls = {c[0]: c for c in chain.move_classes(n)}
            if n == 0:
                self.t_first[0] = float(1 / P.p)
                self.r_up[0], self.c_up[0] = cls["up"][2], cls["up"][3]
            else:
                self.t_first[n] = float(P.down_total(n))
                self.t_second[n] = float(P.down_total(n) + P.up_total(n))
                self.r_down[n], self.c_down[n] = cls["down"][2], cls["down"][3]
                self.r_up[n], self.c_up[n] = cls["up"][2], cls["up"][3]
        self.lattice = LatticeSampler(self.rank)
        self.deg = self.group.degree

    @staticmethod
    def uniforms(seed: int, index: int, steps: int) -> np.ndarray:
        ss = np.random.SeedSequence(seed, spawn_key=(index,))
        return np.random.Generator(np.random.PCG64(ss)).random((steps, 2))

    def draw(self, seed: int, indices, steps: int) -> np.ndarray:
        return np.stack([self.uniforms(seed, int(i), steps) for i in indices]) if len(indices) \
            else np.zeros((0, steps, 2))

    def step(self, table: PieceTable, piece, off, depth, u):
        """Advance all paths one step in place; u has shape (M, 2)."""
        u1, u2 = u[:, 0], u[:, 1]
        n = depth.astype(np.int64)
        at0 = n == 0
        new_off = off.copy()
        new_depth = n.copy()
        # depth 0
        i0 = np.nonzero(at0)[0]
        if len(i0):
            cay = u1[i0] < self.t_first[0]
            ic = i0[cay]
            gen = np.minimum((u2[ic] * self.deg).astype(np.int64), self.deg - 1)
            lat = gen < 2 * self.rank
            il = ic[lat]
            coord = gen[lat] // 2
            sign = 1 - 2 * (gen[lat] % 2)
            new_off[il, coord] += sign
            bridges = ic[~lat]
            bsign = 1 - 2 * ((gen[~lat] - 2 * self.rank) % 2)
            for i, s in zip(bridges.tolist(), bsign.tolist()):
                pid, h = table.cross(int(piece[i]), tuple(int(c) for c in off[i]), s)
                piece[i] = pid
                new_off[i] = h
            iu = i0[~cay]
            j = np.minimum((u2[iu] * self.c_up[0]).astype(np.int64), self.c_up[0] - 1)
            new_off[iu] += self.lattice.point(np.full(len(iu), self.r_up[0]), j)
            new_depth[iu] = 1
        # depth >= 1
        ih = np.nonzero(~at0)[0]
        if len(ih):
            nh = n[ih]
            if nh.max() >= self.depth_max:
                raise OverflowError(f"path reached depth {nh.max()} at the horizon")
            uu = u1[ih]
            down = uu < self.t_first[nh]
            up = (~down) & (uu < self.t_second[nh])
            lat = ~(down | up)
            for mask, radii, counts, dn, skip0 in (
                (down, self.r_down[nh], self.c_down[nh], -1, False),
                (up, self.r_up[nh], self.c_up[nh], 1, False),
                (lat, self.r_down[nh], self.c_down[nh] - 1, 0, True),
            ):
                sel = ih[mask]
                if not len(sel):
                    continue
                rr, cc = radii[mask], counts[mask]
                j = np.minimum((u2[sel] * cc).astype(np.int64), cc - 1)
                if skip0:
                    j = j + (j >= (cc // 2))     # the origin sits at index g//2
                new_off[sel] += self.lattice.point(rr, j)
                new_depth[sel] = nh[mask] + dn
        off[:] = new_off
        depth[:] = new_depth

    def simulate(self, start: Vertex, steps: int, count: int, seed: int,
                 stride: int = 1, first_index: int = 0, table: PieceTable | None = None,
                 checkpoints=()) -> TrajectoryBatch:
        """``count`` paths of ``steps`` steps; positions are stored at every
        multiple of ``stride``, at the final time and at ``checkpoints``."""
        if steps < 0 or count < 0:
            raise ValueError("steps and count must be nonnegative")
        table = table or PieceTable(self.chain)
        pid0, h0 = table.locate(start.element)
        M = count
        piece = np.full(M, pid0, dtype=np.int32)
        off = np.tile(np.array(h0, dtype=np.int64), (M, 1))
        depth = np.full(M, start.depth, dtype=np.int16)
        times = set(range(0, steps + 1, max(stride, 1))) | {steps}
        times |= {int(t) for t in checkpoints if 0 <= t <= steps}
        times = sorted(times)
        T = len(times)
        P_ = np.zeros((M, T), dtype=np.int32)
        O_ = np.zeros((M, T, self.rank), dtype=np.int64)
        D_ = np.zeros((M, T), dtype=np.int16)
        U = self.draw(seed, range(first_index, first_index + M), steps) if steps else None
        k = 0
        for t in range(steps + 1):
            if k < T and times[k] == t:
                P_[:, k], O_[:, k], D_[:, k] = piece, off, depth
                k += 1
            if t < steps:
                self.step(table, piece, off, depth, U[:, t])
        return TrajectoryBatch(start, steps, M, seed, stride, np.array(times), P_, O_, D_, table)

    def distance_from_origin(self, table: PieceTable, piece, off, depth) -> np.ndarray:
        """Graph distance from (e,0) for arrays of positions."""
        entry = np.asarray(table.entry_dist, dtype=np.int64)[piece]
        r = np.abs(off).sum(axis=1)
        return entry + self.chain.graph.piece_distance_array(np.zeros_like(r), depth, r)

    def run_to_radius(self, start: Vertex, radius: int, count: int, seed: int,
                      max_steps: int | None = None, first_index: int = 0,
                      table: PieceTable | None = None, block: int = 128):
        """Run paths until their distance from (e,0) first reaches ``radius``.

        Uniforms are drawn in blocks from each path's own stream, so the
        result does not depend on ``block``.  Returns (table, piece, offset,
        depth, exit_step); exit_step is -1 for paths still inside after
        ``max_steps``.
        """
        table = table or PieceTable(self.chain)
        max_steps = max_steps or 200 * max(radius, 1)
        pid0, h0 = table.locate(start.element)
        M = count
        piece = np.full(M, pid0, dtype=np.int32)
        off = np.tile(np.array(h0, dtype=np.int64), (M, 1))
        depth = np.full(M, start.depth, dtype=np.int16)
        exit_step = np.full(M, -1, dtype=np.int64)
        dist = self.distance_from_origin(table, piece, off, depth)
        exit_step[dist >= radius] = 0
        gens = [np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(i,))))
                for i in range(first_index, first_index + M)]
        t = 0
        while t < max_steps:
            act = np.nonzero(exit_step < 0)[0]
            if not len(act):
                break
            B = min(block, max_steps - t)
            U = np.stack([gens[i].random((B, 2)) for i in act.tolist()])
            live = np.ones(len(act), dtype=bool)
            for b in range(B):
                sel = np.nonzero(live)[0]
                if not len(sel):
                    break
                idx = act[sel]
                p, o, d = piece[idx], off[idx], depth[idx]
                self.step(table, p, o, d, U[sel, b])
                piece[idx], off[idx], depth[idx] = p, o, d
                out = self.distance_from_origin(table, p, o, d) >= radius
                exit_step[idx[out]] = t + b + 1
                live[sel[out]] = False
            t += B
        return table, piece, off, depth, exit_step
