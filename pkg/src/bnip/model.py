"""Integer program over family variables and its valid inequalities.

Every constructor sums only over candidates present in the score table, so
rows are valid for all networks representable by that table.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

from .table import Network, ScoreTable, to_mask

LE, GE, EQ = "<=", ">=", "=="
TAGS = ("convexity", "cluster", "packing", "convex4B", "chvatal2", "gomory", "exclusion", "edge")


class InfeasibleConstraintError(ValueError):
    """User structural constraints leave no feasible network."""


@dataclass(frozen=True)
class LinearInequality:
    """``sum(coef * x[var]) <sense> rhs`` over family variable ids."""

    coeffs: tuple  # ((var, coef), ...) sorted by var, no zeros
    sense: str
    rhs: float
    tag: str = field(default="cluster", compare=False)

    def __post_init__(self):
        if self.sense not in (LE, GE, EQ):
            raise ValueError(f"bad sense {self.sense!r}")
        if not self.coeffs:
            raise ValueError("inequality has no terms")
        if not np.isfinite(self.rhs):
            raise ValueError("rhs must be finite")

    @classmethod
    def build(cls, terms: Iterable[tuple[int, float]], sense: str, rhs: float, tag: str):
        acc: dict = {}
        for var, coef in terms:
            acc[var] = acc.get(var, 0.0) + coef
        coeffs = tuple((int(v), float(c)) for v, c in sorted(acc.items()) if c != 0.0)
        return cls(coeffs, sense, float(rhs), tag)

    @cached_property
    def _hash(self) -> int:
        return hash((self.coeffs, self.sense, self.rhs))

    def __hash__(self):
        return self._hash

    @cached_property
    def index(self) -> np.ndarray:
        return np.array([v for v, _ in self.coeffs], dtype=int)

    @cached_property
    def values(self) -> np.ndarray:
        return np.array([c for _, c in self.coeffs])

    def lhs(self, x) -> float:
        return float(np.dot(self.values, np.asarray(x, dtype=float)[self.index]))

    def violation(self, x) -> float:
        """Amount by which ``x`` breaks the row (<= 0 when satisfied)."""
        lhs = self.lhs(x)
        if self.sense == LE:
            return lhs - self.rhs
        if self.sense == GE:
            return self.rhs - lhs
        return abs(lhs - self.rhs)

    def satisfied(self, x, tol: float = 1e-9) -> bool:
        return self.violation(x) <= tol

    def __str__(self):
        terms = " + ".join(f"{c:g}*x{v}" for v, c in self.coeffs)
        return f"[{self.tag}] {terms} {self.sense} {self.rhs:g}"


def _row(st: ScoreTable, pick, sense: str, rhs: float, tag: str) -> LinearInequality | None:
    """Row over all candidates where ``pick(family)`` returns a non-zero coefficient."""
    terms = []
    for i, fam in enumerate(st.families):
        coef = pick(fam)
        if coef:
            terms.append((i, coef))
    if not terms:
        return None
    return LinearInequality.build(terms, sense, rhs, tag)


def _require(row, what):
    if row is None:
        raise InfeasibleConstraintError(f"{what}: no candidate family appears in it")
    return row


def convexity_row(v: int, st: ScoreTable) -> LinearInequality:
    return LinearInequality.build(((i, 1.0) for i in st.ids(v)), EQ, 1.0, "convexity")


def cluster_inequality(cluster: Iterable[int], st: ScoreTable) -> LinearInequality:
    """At least one member of the cluster takes all its parents from outside it."""
    cmask = to_mask(cluster)
    if bin(cmask).count("1") < 2:
        raise ValueError("clusters need at least two nodes")
    row = _row(st, lambda f: 1.0 if (cmask >> f.child) & 1 and not f.mask & cmask else 0.0,
               GE, 1.0, "cluster")
    return _require(row, "cluster inequality")


def knapsack_form(cluster: Iterable[int], st: ScoreTable) -> LinearInequality | None:
    """Cluster inequality rewritten with the convexity equalities (<= |C| - 1).

    Returns None when no candidate has a parent inside the cluster, in which
    case the inequality holds trivially.
    """
    cmask = to_mask(cluster)
    size = bin(cmask).count("1")
    if size < 2:
        raise ValueError("clusters need at least two nodes")
    return _row(st, lambda f: 1.0 if (cmask >> f.child) & 1 and f.mask & cmask else 0.0,
                LE, size - 1.0, "cluster")


def set_packing_inequality(cluster: Iterable[int], st: ScoreTable) -> LinearInequality | None:
    """At most one member of the cluster has all the other members as parents.

    Returns None when no candidate qualifies.
    """
    cmask = to_mask(cluster)
    if bin(cmask).count("1") < 2:
        raise ValueError("clusters need at least two nodes")

    def pick(f):
        if not (cmask >> f.child) & 1:
            return 0.0
        rest = cmask & ~(1 << f.child)
        return 1.0 if f.mask & rest == rest else 0.0

    return _row(st, pick, LE, 1.0, "packing")


def convex4b_inequality(v1: int, v2: int, v3: int, v4: int, st: ScoreTable) -> LinearInequality | None:
    """4B facet with endpoints ``v1``, ``v4`` and middle pair ``v2``, ``v3`` (rhs 2)."""
    if len({v1, v2, v3, v4}) != 4:
        raise ValueError("4B inequalities need four distinct nodes")
    mid = (1 << v2) | (1 << v3)
    ends = (1 << v1) | (1 << v4)

    def pick(f):
        m = f.mask
        if f.child == v1:
            return 1.0 if (m >> v4) & 1 and m & mid else 0.0
        if f.child == v4:
            return 1.0 if (m >> v1) & 1 and m & mid else 0.0
        if f.child == v2:
            return 1.0 if (m >> v3) & 1 or m & ends == ends else 0.0
        if f.child == v3:
            return 1.0 if (m >> v2) & 1 or m & ends == ends else 0.0
        return 0.0

    return _row(st, pick, LE, 2.0, "convex4B")


def chvatal2_inequality(a: int, others: Iterable[int], st: ScoreTable) -> LinearInequality:
    """Rank-2 combination of the cluster inequalities for {a,b}, {a,c}, {a,d}."""
    others = tuple(others)
    if len(others) != 3 or len({a, *others}) != 4:
        raise ValueError("need node a and three other distinct nodes")
    bcd = to_mask(others)

    def pick(f):
        if f.child == a:
            hit = bin(f.mask & bcd).count("1")
            return 2.0 if hit == 0 else (1.0 if hit < 3 else 0.0)
        if f.child in others:
            return 1.0 if not (f.mask >> a) & 1 else 0.0
        return 0.0

    return _require(_row(st, pick, GE, 2.0, "chvatal2"), "chvatal2 inequality")


def characteristic_imset_entry(net: Network, cluster: Iterable[int]) -> int:
    """Characteristic imset value of ``cluster`` (size >= 2) for an acyclic network."""
    cluster = frozenset(cluster)
    if len(cluster) < 2:
        raise ValueError("imset entries are indexed by sets of at least two nodes")
    return sum(1 for v in cluster if cluster - {v} <= net.parents[v])


def characteristic_imset(net: Network) -> dict:
    """All non-zero entries of the characteristic imset, keyed by frozenset."""
    out = {}
    for v, ps in enumerate(net.parents):
        for k in range(1, len(ps) + 1):
            for sub in combinations(sorted(ps), k):
                out[frozenset(sub) | {v}] = 1
    return out


def require_edge(u: int, v: int, st: ScoreTable) -> LinearInequality:
    """Equality forcing ``u`` to be a parent of ``v``."""
    if u == v:
        raise ValueError("an edge needs two distinct nodes")
    row = _row(st, lambda f: 1.0 if f.child == v and u in f.parents else 0.0, EQ, 1.0, "edge")
    return _require(row, f"required edge {st.names[u]} -> {st.names[v]}")


def forbid_edge(u: int, v: int, st: ScoreTable) -> ScoreTable:
    """Table without any candidate that has ``u`` as a parent of ``v``."""
    if u == v:
        raise ValueError("an edge needs two distinct nodes")
    keep = [c for c in st.candidates(v) if u not in c.parents]
    if not keep:
        raise InfeasibleConstraintError(
            f"forbidding edge {st.names[u]} -> {st.names[v]} removes every candidate of {st.names[v]}")
    cands = [keep if w == v else st.candidates(w) for w in range(st.p)]
    return st.with_candidates(cands)


def edge_constraint(u: int, v: int, present: bool, st: ScoreTable):
    """Row for a required edge, or the reduced table for a forbidden one."""
    return require_edge(u, v, st) if present else forbid_edge(u, v, st)


def apply_edge_constraints(st: ScoreTable, constraints: Sequence[tuple[int, int, bool]]):
    """Apply ``(u, v, present)`` triples: forbidden edges first, then required rows.

    Returns the reduced table and the list of required-edge rows.
    """
    required = {(u, v) for u, v, present in constraints if present}
    forbidden = {(u, v) for u, v, present in constraints if not present}
    clash = required & forbidden
    if clash:
        u, v = sorted(clash)[0]
        raise InfeasibleConstraintError(f"edge {st.names[u]} -> {st.names[v]} is both required and forbidden")
    for u, v in sorted(forbidden):
        st = forbid_edge(u, v, st)
    return st, [require_edge(u, v, st) for u, v in sorted(required)]


def exclusion_constraint(net: Network, st: ScoreTable) -> LinearInequality:
    """Row cutting off exactly the family assignment of ``net``."""
    ids = st.family_ids_of(net)
    if ids is None:
        raise ValueError("network is not representable in this table")
    return LinearInequality.build(((i, 1.0) for i in ids), LE, st.p - 1.0, "exclusion")


def packing_rows(st: ScoreTable, max_size: int = 4) -> list[LinearInequality]:
    """Non-trivial set packing rows (at least two terms) for 2 <= |C| <= max_size."""
    rows = []
    for size in range(2, min(max_size, st.p) + 1):
        for cluster in combinations(range(st.p), size):
            row = set_packing_inequality(cluster, st)
            if row is not None and len(row.coeffs) >= 2:
                rows.append(row)
    return rows


class IpModel:
    """Objective, convexity rows and any static rows over a score table.

    Args:
        table: the candidate families (variable space).
        set_packing: add the set packing rows for clusters of size 2 to 4.
        extra_rows: further static rows, e.g. required edges or exclusions.
    """

    def __init__(self, table: ScoreTable, set_packing: bool = True,
                 extra_rows: Sequence[LinearInequality] = ()):
        self.table = table
        self.objective = table.scores.copy()
        self.rows: list[LinearInequality] = [convexity_row(v, table) for v in range(table.p)]
        if set_packing:
            self.rows += packing_rows(table)
        self.rows += list(extra_rows)
        self.set_packing = set_packing

    @property
    def n(self) -> int:
        return self.table.n

    def with_rows(self, rows: Sequence[LinearInequality]) -> "IpModel":
        new = IpModel.__new__(IpModel)
        new.table = self.table
        new.objective = self.objective
        new.rows = self.rows + list(rows)
        new.set_packing = self.set_packing
        return new

    def count(self, tag: str) -> int:
        return sum(1 for r in self.rows if r.tag == tag)

    def feasible(self, x, tol: float = 1e-6) -> bool:
        return all(r.satisfied(x, tol) for r in self.rows)

    def admits(self, net: Network) -> bool:
        """True if ``net`` is representable and satisfies every model row."""
        ids = self.table.family_ids_of(net)
        if ids is None:
            return False
        x = np.zeros(self.n)
        x[ids] = 1.0
        return self.feasible(x)


def build_ip(st: ScoreTable, set_packing: bool = True, extra_rows: Sequence[LinearInequality] = ()) -> IpModel:
    return IpModel(st, set_packing=set_packing, extra_rows=extra_rows)


def network_vector(net: Network, st: ScoreTable) -> np.ndarray:
    return st.vector(net)


def family_values(st: ScoreTable, assignments: dict) -> np.ndarray:
    """Dense point from ``{(child, parents): value}``; unspecified entries are 0."""
    x = np.zeros(st.n)
    for (v, ps), val in assignments.items():
        i = st.family_id(v, ps)
        if i is None:
            raise KeyError(f"no candidate {sorted(ps)} -> {v}")
        x[i] = val
    return x

