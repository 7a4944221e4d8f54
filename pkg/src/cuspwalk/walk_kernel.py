"""Exact walk parameters and the reversible chain (X, P, m) on the cusped graph.

All parameters are ``fractions.Fraction``.  Rows are Gamma-invariant, so
each depth has one row template (offsets relative to the current vertex)
that is translated to the vertex on demand.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from math import floor

import numpy as np

from .group_model import GroupModel, H_FACTOR, FREE_FACTOR, make_group
from .cusped_graph import Vertex, CuspedGraph


class InfeasibleParameters(ValueError):
    """Raised by solve_params; carries the condition label and depth."""

    def __init__(self, condition: str, n: int | None, detail: str):
        self.condition = condition
        self.n = n
        self.detail = detail
        where = "" if n is None else f" at n={n}"
        super().__init__(f"condition {condition} fails{where}: {detail}")


class DepthBeyondHorizon(ValueError):
    pass


class MCollision(ValueError):
    pass


def as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, dict):
        return Fraction(int(x["num"]), int(x["den"]))
    if isinstance(x, float):
        return Fraction(x).limit_denominator(10**6)
    return Fraction(x)


def fraction_json(x: Fraction) -> dict:
    return {"num": x.numerator, "den": x.denominator}


def floor_power(a: Fraction, n: int) -> int:
    """floor(a^n), exact for rational a."""
    return floor(a**n)


@dataclass(frozen=True)
class WalkParams:
    group: str
    a: Fraction
    p: Fraction
    q: Fraction
    p0: Fraction
    m0: Fraction
    p_n: tuple          # p_n[n] for n = 0..n_max (p_n[0] = p0)
    q_n: tuple          # q_n[n] for n = 0..n_max
    c_n: tuple          # c_n[n] for n = 0..n_max+1 (c_n[0] unused, stored as 1)
    alpha: Fraction
    beta: Fraction
    n_max: int
    caps: tuple = field(repr=False)     # floor(a^n), n = 0..n_max+2
    gvals: tuple = field(repr=False)    # g_H(a^n), n = 0..n_max+2

    def g(self, n: int) -> int:
        """g_H(a^n)."""
        return self.gvals[n]

    def cap(self, n: int) -> int:
        return self.caps[n]

    def up_total(self, n: int) -> Fraction:
        """Total up-move probability from depth n."""
        return Fraction(self.g(n + 1), 1) / (self.p_n[n] * self.g(n + 2))

    def down_total(self, n: int) -> Fraction:
        return 1 / self.q_n[n - 1] if n >= 1 else Fraction(0)

    def lateral_total(self, n: int) -> Fraction:
        if n == 0:
            return Fraction(0)
        return 1 - self.down_total(n) - self.up_total(n)

    def to_json(self) -> dict:
        fj = fraction_json
        return {
            "group": self.group,
            "a": fj(self.a), "p": fj(self.p), "q": fj(self.q),
            "p0": fj(self.p0), "m0": fj(self.m0),
            "alpha": fj(self.alpha), "beta": fj(self.beta),
            "n_max": self.n_max,
            "p_n": [fj(x) for x in self.p_n],
            "q_n": [fj(x) for x in self.q_n],
            "c_n": [fj(x) for x in self.c_n],
        }


def _tabulate(group: GroupModel, a: Fraction, n_max: int):
    caps = tuple(floor_power(a, n) for n in range(n_max + 3))
    gvals = tuple(group.growth(0, c) for c in caps)
    return caps, gvals


def _condition_witnesses(group_name, a, p, p0, m0, p_n, q_n, c_n, gvals, n_max):
    """Evaluate conditions (1)-(6) exactly; returns list of (label, ok, n, witness)."""
    g = lambda n: gvals[n]
    out = []
    lhs = 1 / p + Fraction(g(1), 1) / (p0 * g(2))
    out.append(("1", lhs == 1, None, {"lhs": lhs, "rhs": Fraction(1)}))
    worst = None
    for n in range(1, n_max + 1):
        val = 1 / q_n[n - 1] + Fraction(g(n + 1), 1) / (p_n[n] * g(n + 2))
        if val > 1 and worst is None:
            worst = (n, val)
    out.append(("2", worst is None, None if worst is None else worst[0],
                {"max_lhs": max(1 / q_n[n - 1] + Fraction(g(n + 1), 1) / (p_n[n] * g(n + 2))
                                for n in range(1, n_max + 1)) if worst is None else worst[1],
                 "rhs": Fraction(1)}))
    lhs3 = m0 / p0 / g(2)
    rhs3 = Fraction(c_n[1], g(1)) / (q_n[0] * g(1))
    out.append(("3", lhs3 == rhs3, None, {"lhs": lhs3, "rhs": rhs3}))
    bad4 = None
    for n in range(1, n_max):
        l4 = Fraction(c_n[n], g(n)) / (p_n[n] * g(n + 2))
        r4 = Fraction(c_n[n + 1], g(n + 1)) / (q_n[n] * g(n + 1))
        if l4 != r4:
            bad4 = (n, l4, r4)
            break
    out.append(("4", bad4 is None, None if bad4 is None else bad4[0],
                {} if bad4 is None else {"lhs": bad4[1], "rhs": bad4[2]}))
    alpha = max([max(p_n[1:n_max + 1]), max(q_n[1:n_max + 1])]
                + [max(c, 1 / c) for c in c_n[1:n_max + 1]])
    bad5 = None
    for n in range(1, n_max + 1):
        if not (p_n[n] > 1 and q_n[n] > 1 and c_n[n] > 0):
            bad5 = n
            break
    out.append(("5", bad5 is None, bad5, {"alpha": alpha}))
    ratios = [q_n[n - 1] * c_n[n + 1] * g(n) / (q_n[n] * c_n[n] * g(n + 1))
              for n in range(1, n_max)]
    beta = max(ratios)
    bad6 = next((n for n, r in enumerate(ratios, start=1) if r >= 1), None)
    out.append(("6", bad6 is None, bad6, {"beta": beta}))
    return out, alpha, beta


def solve_params(group, a=2, p=2, q=4, n_max: int = 24) -> WalkParams:
    """Solve conditions (1)-(6) by the constant-q recipe, exactly.

    p0 from the normalization, p_n from reversibility with c_n = 1,
    m0 from the depth-0/depth-1 balance.  Raises InfeasibleParameters
    naming the first violated requirement.
    """
    if isinstance(group, str):
        group = make_group(group)
    a, p, q = as_fraction(a), as_fraction(p), as_fraction(q)
    if a <= 1:
        raise InfeasibleParameters("a", None, f"a = {a} must exceed 1")
    if p <= 1:
        raise InfeasibleParameters("1", None, f"p = {p}: 1/p leaves no up-mass (need p > 1)")
    if q <= 0:
        raise InfeasibleParameters("5", None, f"q = {q} must be positive")
    caps, gvals = _tabulate(group, a, n_max)
    g = lambda n: gvals[n]
    p0 = Fraction(g(1), 1) / ((1 - 1 / p) * g(2))
    q_n = tuple(q for _ in range(n_max + 1))
    c_n = tuple(Fraction(1) for _ in range(n_max + 2))
    p_n = [p0] + [q_n[n] * g(n + 1) ** 2 / Fraction(g(n) * g(n + 2)) for n in range(1, n_max + 1)]
    m0 = p0 * g(2) * c_n[1] / (q_n[0] * g(1) ** 2)
    conds, alpha, beta = _condition_witnesses(group.name, a, p, p0, m0, p_n, q_n, c_n, gvals, n_max)
    for label, ok, n, wit in conds:
        if not ok:
            raise InfeasibleParameters(label, n, _fmt_witness(wit))
    if p0 <= 1:
        raise InfeasibleParameters("recipe p0>1", 0, f"p0 = {p0}")
    for n in range(1, n_max + 1):
        if p_n[n] <= 2:
            raise InfeasibleParameters("recipe p_n>2", n, f"p_{n} = {p_n[n]}")
    for n in range(1, n_max + 3):
        if m0 == Fraction(1, g(n)):
            raise MCollision(f"m0 = {m0} equals 1/g_H(a^{n})")
    return WalkParams(group.name, a, p, q, p0, m0, tuple(p_n), q_n, c_n, alpha, beta,
                      n_max, caps, gvals)


def _fmt_witness(wit: dict) -> str:
    return ", ".join(f"{k} = {v}" for k, v in wit.items())


@dataclass
class ConditionReport:
    conditions: list          # (label, ok, n, witness dict)
    beta: Fraction
    alpha: Fraction
    recipe: list              # (label, ok, n, value)

    @property
    def passed(self) -> bool:
        return all(ok for _, ok, _, _ in self.conditions)

    def first_failure(self):
        for c in self.conditions:
            if not c[1]:
                return c
        return None

    def to_json(self) -> dict:
        def enc(v):
            return fraction_json(v) if isinstance(v, Fraction) else v
        return {
            "passed": self.passed,
            "alpha": enc(self.alpha),
            "beta": enc(self.beta),
            "conditions": [
                {"condition": label, "ok": ok, "n": n,
                 "witness": {k: enc(v) for k, v in wit.items()}}
                for label, ok, n, wit in self.conditions
            ],
            "recipe": [{"check": label, "ok": ok, "n": n, "value": enc(v)}
                       for label, ok, n, v in self.recipe],
        }


def validate_params(params: WalkParams) -> ConditionReport:
    """Independent re-check of conditions (1)-(6) from the stored fields."""
    conds, alpha, beta = _condition_witnesses(
        params.group, params.a, params.p, params.p0, params.m0, params.p_n,
        params.q_n, params.c_n, params.gvals, params.n_max)
    recipe = [("p0>1", params.p0 > 1, 0, params.p0)]
    low = min(range(1, params.n_max + 1), key=lambda n: params.p_n[n])
    recipe.append(("p_n>2", params.p_n[low] > 2, low, params.p_n[low]))
    return ConditionReport(conds, beta, alpha, recipe)


def check_params(group, a, p, q, n_max: int = 24) -> ConditionReport:
    """Run the recipe without raising and report all six conditions.

    Used by the CLI so that an infeasible choice still yields a full
    report naming the failing condition.
    """
    if isinstance(group, str):
        group = make_group(group)
    a, p, q = as_fraction(a), as_fraction(p), as_fraction(q)
    caps, gvals = _tabulate(group, a, n_max)
    g = lambda n: gvals[n]
    if p <= 1:
        conds = [("1", False, None, {"p": p, "detail": "1/p >= 1 leaves no up-mass"})]
        return ConditionReport(conds, Fraction(0), Fraction(0), [])
    p0 = Fraction(g(1), 1) / ((1 - 1 / p) * g(2))
    q_n = tuple(q for _ in range(n_max + 1))
    c_n = tuple(Fraction(1) for _ in range(n_max + 2))
    p_n = [p0] + [q_n[n] * g(n + 1) ** 2 / Fraction(g(n) * g(n + 2)) for n in range(1, n_max + 1)]
    m0 = p0 * g(2) * c_n[1] / (q_n[0] * g(1) ** 2)
    conds, alpha, beta = _condition_witnesses(group.name, a, p, p0, m0, p_n, q_n, c_n, gvals, n_max)
    low = min(range(1, n_max + 1), key=lambda n: p_n[n])
    recipe = [("p0>1", p0 > 1, 0, p0), ("p_n>2", p_n[low] > 2, low, p_n[low])]
    return ConditionReport(conds, beta, alpha, recipe)


class WeightedChain:
    """The reversible chain (X, P, m) for solved parameters.

    Rows are exact; templates are cached per depth.  The chain is defined
    on the infinite graph, so no ball is needed to produce a row.
    """

    def __init__(self, params: WalkParams, group: GroupModel | None = None):
        self.params = params
        self.group = group or make_group(params.group)
        self.graph = CuspedGraph(self.group, params.a, params.n_max)
        self._templates: dict[int, list] = {}

    # -- weights ----------------------------------------------------------

    def m_depth(self, n: int) -> Fraction:
        P = self.params
        if n < 0 or n > P.n_max:
            raise DepthBeyondHorizon(f"depth {n} beyond horizon {P.n_max}")
        if n == 0:
            return P.m0
        return P.c_n[n] / P.g(n)

    def m_weight(self, v: Vertex) -> Fraction:
        return self.m_depth(v.depth)

    @cached_property
    def m_float(self) -> np.ndarray:
        return np.array([float(self.m_depth(n)) for n in range(self.params.n_max + 1)])

    def m_node(self, v: Vertex) -> list:
        """v together with its neighbours of equal m-value (same depth)."""
        return [v] + [w for w in self.graph.neighbors(v) if w.depth == v.depth]

    # -- rows -------------------------------------------------------------

    def move_classes(self, n: int):
        """Per-depth move classes: (kind, depth change, radius, count, weight each).

        ``kind`` is 'cayley' (depth 0 generator moves), 'down', 'up' or
        'lateral'.  Lateral moves exclude the zero offset.
        """
        P = self.params
        if n > P.n_max:
            raise DepthBeyondHorizon(f"depth {n} beyond horizon {P.n_max}")
        if n == 0:
            deg = self.group.degree
            return [
                ("cayley", 0, 1, deg, 1 / (P.p * deg)),
                ("up", 1, P.cap(1), P.g(1), 1 / (P.p0 * P.g(2))),
            ]
        if n == P.n_max:
            raise DepthBeyondHorizon(f"row at depth {n} needs depth {n + 1}")
        rem = P.lateral_total(n)
        if rem < 0:
            raise InfeasibleParameters("2", n, f"negative lateral remainder {rem}")
        return [
            ("down", -1, P.cap(n), P.g(n), 1 / (P.q_n[n - 1] * P.g(n))),
            ("up", 1, P.cap(n + 1), P.g(n + 1), 1 / (P.p_n[n] * P.g(n + 2))),
            ("lateral", 0, P.cap(n), P.g(n) - 1, rem / (P.g(n) - 1)),
        ]

    def row_template(self, n: int) -> list:
        """List of (move, depth change, weight) where move is a group element
        to right-multiply by.  Moves sharing a target are merged."""
        if n in self._templates:
            return self._templates[n]
        grp = self.group
        acc: dict = {}
        for kind, dn, radius, count, w in self.move_classes(n):
            if kind == "cayley":
                moves = list(grp.generators)
            else:
                moves = [grp.h_element(h) for h in grp.lattice_ball(radius)]
                if kind == "lateral":
                    moves = [m for m in moves if m]
            for mv in moves:
                key = (mv, dn)
                acc[key] = acc.get(key, 0) + w
        tpl = [(mv, dn, w) for (mv, dn), w in acc.items()]
        self._templates[n] = tpl
        return tpl

    def transition_row(self, v: Vertex) -> dict:
        g, n = v
        mul = self.group.mul
        return {Vertex(mul(g, mv), n + dn): w for mv, dn, w in self.row_template(n)}

    def row_total(self, n: int) -> Fraction:
        return sum((w for _, _, w in self.row_template(n)), Fraction(0))

    # -- sampling ---------------------------------------------------------

    def sample_step(self, v: Vertex, rng: np.random.Generator) -> Vertex:
        """Draw the next vertex from the row at v using ``rng``."""
        n = v.depth
        classes = self.move_classes(n)
        totals = [float(c[3] * c[4]) for c in classes]
        u = rng.random() * sum(totals)
        k = 0
        while k < len(classes) - 1 and u >= totals[k]:
            u -= totals[k]
            k += 1
        kind, dn, radius, count, _ = classes[k]
        j = int(rng.integers(count))
        if kind == "cayley":
            mv = self.group.generators[j]
        else:
            pts = self.group.lattice_ball(radius)
            if kind == "lateral":
                pts = [h for h in pts if any(h)]
            mv = self.group.h_element(pts[j])
        return Vertex(self.group.mul(v.element, mv), n + dn)


@dataclass
class RowAudit:
    depths: list
    rows_exact: bool
    balance_exact: bool
    failures: list            # (depth, move, reason)

    @property
    def passed(self) -> bool:
        return self.rows_exact and self.balance_exact

    def to_json(self) -> dict:
        return {"depths": self.depths, "rows_exact": self.rows_exact,
                "balance_exact": self.balance_exact, "failures": [list(map(str, f)) for f in self.failures]}


def audit_templates(chain: WeightedChain, depths) -> RowAudit:
    """Exact row sums and detailed balance for every row at the given depths.

    The row at (g, n) is g times the depth-n template, so checking each
    template entry (move, dn, w) against the reverse entry of the template
    at depth n + dn covers every edge of every such row.
    """
    grp = chain.group
    failures = []
    lookup = {}
    for n in sorted(set(depths)):
        if chain.row_total(n) != 1:
            failures.append((n, None, f"row total {chain.row_total(n)}"))
        for mv, dn, w in chain.row_template(n):
            k = n + dn
            if k not in lookup:
                lookup[k] = {(m, d): x for m, d, x in chain.row_template(k)}
            back = lookup[k].get((grp.inverse(mv), -dn), Fraction(0))
            if chain.m_depth(n) * w != chain.m_depth(k) * back:
                failures.append((n, grp.format(mv), f"balance {w} vs {back}"))
    rows = all(f[1] is not None for f in failures)
    bal = all(f[1] is None for f in failures)
    return RowAudit(sorted(set(depths)), rows, bal, failures)
