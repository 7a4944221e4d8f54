"""Exact arithmetic for the built-in pairs (Gamma, H) with Gamma = H * Z.

Elements are stored in free-product normal form: a tuple of syllables
``(factor, value)`` with alternating factors.  Factor 0 is the parabolic
lattice H = Z^rank (value: tuple of ints), factor 1 is the free Z factor
(value: nonzero int).  Equality of elements is equality of tuples.
"""
from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass
from math import comb, floor

GroupElement = tuple
IDENTITY: GroupElement = ()

H_FACTOR = 0
FREE_FACTOR = 1


class BudgetExceeded(RuntimeError):
    """Raised when an enumeration would exceed its element budget."""


def lattice_ball_size(rank: int, radius: int) -> int:
    """Number of points of Z^rank with l1-norm at most ``radius``."""
    if radius < 0:
        return 0
    return sum(2**k * comb(rank, k) * comb(radius, k) for k in range(rank + 1))


@dataclass(frozen=True)
class ParabolicSpec:
    index: int
    generators: tuple[str, ...]
    rank: int

    @property
    def d_H(self) -> int:
        return self.rank

    def growth(self, r) -> int:
        """g_H(floor r): exact size of the word-metric ball in H."""
        if r < 0:
            raise ValueError("radius must be nonnegative")
        return lattice_ball_size(self.rank, floor(r))

    def growth_table(self, rmax: int) -> list[int]:
        return [self.growth(r) for r in range(rmax + 1)]


class GroupModel:
    """Free product H * Z with H = Z^rank, relative to the factor H.

    ``h_letters`` name the lattice generators, ``free_letter`` the Z factor.
    Upper-case letters denote inverses when parsing words.
    """

    def __init__(self, name: str, h_letters: tuple[str, ...], free_letter: str):
        self.name = name
        self.rank = len(h_letters)
        self.h_letters = h_letters
        self.free_letter = free_letter
        self.parabolics = (ParabolicSpec(0, h_letters, self.rank),)
        self.zero_h = (0,) * self.rank
        gens = []
        for i in range(self.rank):
            for s in (1, -1):
                v = [0] * self.rank
                v[i] = s
                gens.append(((H_FACTOR, tuple(v)),))
        gens.append(((FREE_FACTOR, 1),))
        gens.append(((FREE_FACTOR, -1),))
        self.generators: tuple[GroupElement, ...] = tuple(gens)

    def __repr__(self):
        return f"GroupModel({self.name!r})"

    @property
    def degree(self) -> int:
        return len(self.generators)

    @property
    def identity(self) -> GroupElement:
        return IDENTITY

    # -- arithmetic -------------------------------------------------------

    def _combine(self, factor, x, y):
        if factor == H_FACTOR:
            return tuple(i + j for i, j in zip(x, y))
        return x + y

    def _is_zero(self, factor, x) -> bool:
        if factor == H_FACTOR:
            return not any(x)
        return x == 0

    def mul(self, g: GroupElement, h: GroupElement) -> GroupElement:
        if not g:
            return h
        if not h:
            return g
        i, j = len(g), 0
        while i > 0 and j < len(h) and g[i - 1][0] == h[j][0]:
            f = h[j][0]
            v = self._combine(f, g[i - 1][1], h[j][1])
            if self._is_zero(f, v):
                i -= 1
                j += 1
                continue
            return g[: i - 1] + ((f, v),) + h[j + 1:]
        return g[:i] + h[j:]

    def inverse(self, g: GroupElement) -> GroupElement:
        out = []
        for f, v in reversed(g):
            out.append((f, tuple(-x for x in v) if f == H_FACTOR else -v))
        return tuple(out)

    def h_element(self, v) -> GroupElement:
        v = tuple(v)
        return () if not any(v) else ((H_FACTOR, v),)

    def free_element(self, j: int) -> GroupElement:
        return () if j == 0 else ((FREE_FACTOR, j),)

    def syllable_length(self, factor, v) -> int:
        return sum(abs(x) for x in v) if factor == H_FACTOR else abs(v)

    def word_length(self, g: GroupElement) -> int:
        return sum(self.syllable_length(f, v) for f, v in g)

    def h_norm(self, v) -> int:
        return sum(abs(x) for x in v)

    # -- cosets -----------------------------------------------------------

    def split_coset(self, g: GroupElement):
        """Return (coset representative, trailing H-value) with g = rep * h."""
        if g and g[-1][0] == H_FACTOR:
            return g[:-1], g[-1][1]
        return g, self.zero_h

    def coset_of(self, g: GroupElement, i: int = 0) -> GroupElement:
        if i != 0:
            raise ValueError(f"unknown parabolic index {i}")
        return self.split_coset(g)[0]

    def growth(self, i: int, r) -> int:
        if i != 0:
            raise ValueError(f"unknown parabolic index {i}")
        return self.parabolics[0].growth(r)

    # -- enumeration ------------------------------------------------------

    def word_ball(self, radius: int, budget: int = 5_000_000) -> set:
        if radius < 0:
            raise ValueError("radius must be nonnegative")
        seen = {IDENTITY}
        frontier = [IDENTITY]
        for _ in range(radius):
            nxt = []
            for g in frontier:
                for s in self.generators:
                    w = self.mul(g, s)
                    if w not in seen:
                        seen.add(w)
                        nxt.append(w)
                        if len(seen) > budget:
                            raise BudgetExceeded(f"word ball exceeds budget {budget}")
            frontier = nxt
        return seen

    def lattice_ball(self, radius: int):
        """All v in Z^rank with l1-norm <= radius, in lexicographic order."""
        radius = int(radius)
        if self.rank == 1:
            return [(k,) for k in range(-radius, radius + 1)]
        out = []
        for i in range(-radius, radius + 1):
            rest = radius - abs(i)
            for j in range(-rest, rest + 1):
                out.append((i, j))
        return out

    # -- text form --------------------------------------------------------

    def format(self, g: GroupElement) -> str:
        if not g:
            return "e"
        parts = []
        for f, v in g:
            if f == H_FACTOR:
                for letter, k in zip(self.h_letters, v):
                    if k:
                        parts.append(letter if k == 1 else f"{letter}^{k}")
            else:
                parts.append(self.free_letter if v == 1 else f"{self.free_letter}^{v}")
        return "".join(parts)

    _token = re.compile(r"([A-Za-z])(?:\^(-?\d+))?")

    def parse(self, word: str) -> GroupElement:
        word = word.replace(" ", "")
        if word in ("", "e"):
            return IDENTITY
        g = IDENTITY
        pos = 0
        letters = {l: i for i, l in enumerate(self.h_letters)}
        while pos < len(word):
            m = self._token.match(word, pos)
            if not m:
                raise ValueError(f"cannot parse {word!r} at {pos}")
            pos = m.end()
            letter, k = m.group(1), int(m.group(2) or 1)
            if letter.isupper():
                letter, k = letter.lower(), -k
            if letter == self.free_letter:
                g = self.mul(g, self.free_element(k))
            elif letter in letters:
                v = [0] * self.rank
                v[letters[letter]] = k
                g = self.mul(g, self.h_element(v))
            else:
                raise ValueError(f"unknown letter {letter!r} in {word!r}")
        return g


GROUPS = {
    "f2-rel-z": lambda: GroupModel("f2-rel-z", ("a",), "b"),
    "z2-free-z": lambda: GroupModel("z2-free-z", ("x", "y"), "t"),
}


def make_group(name: str) -> GroupModel:
    try:
        return GROUPS[name]()
    except KeyError:
        raise ValueError(f"unknown group {name!r}; choose from {sorted(GROUPS)}") from None
