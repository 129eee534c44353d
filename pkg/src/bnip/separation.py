"""Cutting plane separation: cluster cuts, 4B cuts and Gomory cuts."""
from __future__ import annotations

import heapq
from dataclasses import dataclass
from itertools import combinations
from math import floor

import numpy as np

from .lp import LpSolution, _values
from .model import EQ, GE, IpModel, LinearInequality, cluster_inequality, convex4b_inequality
from .table import ScoreTable, to_mask

VIOL_TOL = 1e-6
MAX_CLUSTER_CUTS = 50
MAX_4B_CUTS = 20
GOMORY_ROWS = 10
# Gomory rows are only used when the basic value is clearly fractional
GOMORY_MIN_FRAC = 0.01
GOMORY_MAX_DYNAMISM = 1e4


@dataclass(frozen=True)
class Cut:
    inequality: LinearInequality
    violation: float
    source: str
    cluster: frozenset | None = None


def _popcount(mask: int) -> int:
    return bin(mask).count("1")


def _members(mask: int) -> frozenset:
    out = []
    v = 0
    while mask:
        if mask & 1:
            out.append(v)
        mask >>= 1
        v += 1
    return frozenset(out)


def cluster_lhs(x, st: ScoreTable, cluster) -> float:
    """Left-hand side of the cluster inequality evaluated at ``x``."""
    x = _values(x)
    cmask = to_mask(cluster)
    return float(sum(x[i] for i, f in enumerate(st.families)
                     if (cmask >> f.child) & 1 and not st.masks[i] & cmask))


class SubIp:
    """Search over clusters for violated cluster inequalities.

    Each node ``v`` may join the cluster at cost 1; each family with positive
    LP value whose parent set meets the cluster pays out that value when its
    child is in the cluster. A cluster whose objective exceeds -1 violates
    its cluster inequality by ``objective + 1`` (given the convexity rows).

    Args:
        x: LP point over family variables.
        st: score table the point refers to.
        sparse: only create payout terms for families with positive value;
            ``False`` keeps every family (results are identical).
    """

    def __init__(self, x, st: ScoreTable, sparse: bool = True):
        x = _values(x)
        self.p = st.p
        self.terms: list[list[tuple[int, float]]] = [[] for _ in range(st.p)]
        for i, fam in enumerate(st.families):
            if not fam.parents:
                continue  # an empty parent set can never meet the cluster
            if sparse and x[i] <= 0.0:
                continue
            self.terms[fam.child].append((st.masks[i], float(x[i])))
        self.n_terms = sum(len(t) for t in self.terms)
        mass = [sum(val for _, val in t) for t in self.terms]
        self.order = sorted(range(st.p), key=lambda v: (-mass[v], v))

    def objective(self, cmask: int) -> float:
        total = -float(_popcount(cmask))
        for v in _members(cmask):
            total += sum(val for m, val in self.terms[v] if m & cmask)
        return total

    def solve(self, cutoff: float = -1.0 + VIOL_TOL, keep: int = MAX_CLUSTER_CUTS) -> list[tuple[float, int]]:
        """Best ``keep`` clusters with objective above ``cutoff``, best first.

        Depth-first over inclusion decisions, include branch first. A
        partial assignment is dropped once its bound cannot beat the cutoff,
        or the weakest kept cluster when ``keep`` clusters are already held.
        """
        p, terms, order = self.p, self.terms, self.order
        found: list[tuple[float, int]] = []  # min-heap of (objective, -mask)
        seen = set()

        def live(v, out_mask):
            return sum(val for m, val in terms[v] if m & ~out_mask)

        def dfs(k, in_mask, out_mask):
            threshold = cutoff if len(found) < keep else max(cutoff, found[0][0])
            bound = 0.0
            for v in range(p):
                bit = 1 << v
                if out_mask & bit:
                    continue
                gain = live(v, out_mask) - 1.0
                if in_mask & bit:
                    bound += gain
                elif gain > 0:
                    bound += gain
            if bound <= threshold:
                return
            if k == p:
                if _popcount(in_mask) >= 2 and in_mask not in seen:
                    obj = self.objective(in_mask)
                    if obj > threshold:
                        seen.add(in_mask)
                        item = (obj, -in_mask)
                        if len(found) < keep:
                            heapq.heappush(found, item)
                        else:
                            heapq.heapreplace(found, item)
                return
            bit = 1 << order[k]
            dfs(k + 1, in_mask | bit, out_mask)
            dfs(k + 1, in_mask, out_mask | bit)

        dfs(0, 0, 0)
        return [(obj, -neg) for obj, neg in sorted(found, key=lambda t: (-t[0], -t[1]))]


def _cluster_cut(x, st, cmask) -> Cut:
    row = cluster_inequality(_members(cmask), st)
    return Cut(row, row.violation(x), "cluster", _members(cmask))


def find_cluster_cuts(x, st: ScoreTable, max_cuts: int = MAX_CLUSTER_CUTS, tol: float = VIOL_TOL,
                      sparse: bool = True) -> list[Cut]:
    """Violated cluster inequalities, most violated first.

    Complete: returns an empty list only if no cluster inequality is
    violated by more than ``tol``.
    """
    x = _values(x)
    sub = SubIp(x, st, sparse=sparse)
    cuts = []
    for obj, cmask in sub.solve(-1.0 + tol, max_cuts):
        cut = _cluster_cut(x, st, cmask)
        if cut.violation > tol:
            cuts.append(cut)
    cuts.sort(key=lambda c: (-c.violation, sorted(c.cluster)))
    return cuts


def find_cluster_cuts_bruteforce(x, st: ScoreTable, tol: float = VIOL_TOL) -> list[Cut]:
    """Check the cluster inequality of every node subset of size >= 2."""
    x = _values(x)
    cuts = []
    for size in range(2, st.p + 1):
        for cluster in combinations(range(st.p), size):
            viol = 1.0 - cluster_lhs(x, st, cluster)
            if viol > tol:
                row = cluster_inequality(cluster, st)
                cuts.append(Cut(row, viol, "cluster", frozenset(cluster)))
    cuts.sort(key=lambda c: (-c.violation, sorted(c.cluster)))
    return cuts


def find_convex4b_cuts(x, st: ScoreTable, max_cuts: int = MAX_4B_CUTS, tol: float = VIOL_TOL) -> list[Cut]:
    """Violated 4B inequalities among 4-sets of nodes carrying LP mass on non-empty parent sets."""
    x = _values(x)
    if st.p < 4:
        return []
    support: list[list[tuple[int, float]]] = [[] for _ in range(st.p)]
    for i, fam in enumerate(st.families):
        if fam.parents and x[i] > 0:
            support[fam.child].append((st.masks[i], float(x[i])))
    active = [v for v in range(st.p) if support[v]]
    cuts = []
    for quad in combinations(active, 4):
        for mid in combinations(quad, 2):
            v2, v3 = mid
            v1, v4 = [v for v in quad if v not in mid]
            lhs = _lhs_4b(support, v1, v2, v3, v4)
            if lhs - 2.0 > tol:
                row = convex4b_inequality(v1, v2, v3, v4, st)
                cuts.append(Cut(row, row.violation(x), "convex4B", frozenset(quad)))
    cuts.sort(key=lambda c: (-c.violation, c.inequality.coeffs))
    return cuts[:max_cuts]


def _lhs_4b(support, v1, v2, v3, v4) -> float:
    mid = (1 << v2) | (1 << v3)
    ends = (1 << v1) | (1 << v4)
    total = 0.0
    for m, val in support[v1]:
        if (m >> v4) & 1 and m & mid:
            total += val
    for m, val in support[v4]:
        if (m >> v1) & 1 and m & mid:
            total += val
    for m, val in support[v2]:
        if (m >> v3) & 1 or m & ends == ends:
            total += val
    for m, val in support[v3]:
        if (m >> v2) & 1 or m & ends == ends:
            total += val
    return total


def _integral_row(row: LinearInequality) -> bool:
    return float(row.rhs).is_integer() and all(float(c).is_integer() for _, c in row.coeffs)


def find_gomory_cuts(sol: LpSolution, model: IpModel, max_cuts: int = GOMORY_ROWS,
                     tol: float = VIOL_TOL) -> list[Cut]:
    """Gomory mixed-integer cuts read off the optimal simplex tableau.

    Nonbasic family variables are complemented against their global 0/1
    bounds (not the local fixings), so the cuts hold for every integer point
    of the rows in ``sol.rows``, not just the current subtree.
    """
    if not sol.optimal or sol.binv is None:
        return []
    n = sol.n
    rows = sol.rows
    x = sol.values
    full = sol.full
    nonbasic = np.ones(sol.matrix.shape[1], dtype=bool)
    nonbasic[sol.basic_cols] = False
    integral_slack = [_integral_row(r) and r.sense != EQ for r in rows]
    picks = []
    for r, col in enumerate(sol.basic_cols.tolist()):
        if col >= n:
            continue
        f = full[col] - floor(full[col])
        if min(f, 1.0 - f) >= GOMORY_MIN_FRAC:
            picks.append((-min(f, 1.0 - f), col, r))
    picks.sort()
    cuts = []
    for _, col, r in picks[:max_cuts]:
        cut = _gmi(sol, r, full[col], n, rows, nonbasic, integral_slack, tol, x)
        if cut is not None:
            cuts.append(cut)
    cuts.sort(key=lambda c: -c.violation)
    return cuts


def _gmi(sol, r, beta, n, rows, nonbasic, integral_slack, tol, x):
    trow = sol.binv[r] @ sol.matrix
    f0 = beta - floor(beta)
    coef_x = np.zeros(n)
    const = 0.0
    for j in np.nonzero(nonbasic & (np.abs(trow) > 1e-11))[0].tolist():
        a = trow[j]
        if j < n:
            upper = sol.full[j] > 0.5
            integer = True
        else:
            row = rows[j - n]
            if row.sense == EQ:
                continue
            upper = row.sense == GE
            integer = integral_slack[j - n]
        abar = -a if upper else a
        if integer:
            fj = abar - floor(abar)
            pi = fj / f0 if fj <= f0 else (1.0 - fj) / (1.0 - f0)
        else:
            pi = abar / f0 if abar > 0 else -abar / (1.0 - f0)
        if pi == 0.0:
            continue
        # pi * xtilde with xtilde = x_j, 1 - x_j, s or -s; s = rhs - a.x
        if j < n:
            if upper:
                const += pi
                coef_x[j] -= pi
            else:
                coef_x[j] += pi
        else:
            row = rows[j - n]
            sign = -1.0 if upper else 1.0
            const += sign * pi * row.rhs
            coef_x[row.index] -= sign * pi * row.values
    rhs = 1.0 - const
    tiny = (np.abs(coef_x) < 1e-9) & (coef_x != 0.0)
    # dropping a term from a >= row over [0, 1] variables: relax by its positive part
    rhs -= np.clip(coef_x[tiny], 0.0, None).sum()
    coef_x[tiny] = 0.0
    support = np.nonzero(coef_x)[0]
    if not len(support):
        return None
    mags = np.abs(coef_x[support])
    if mags.max() / mags.min() > GOMORY_MAX_DYNAMISM:
        return None
    scale = mags.max()
    row = LinearInequality.build(zip(support.tolist(), (coef_x[support] / scale).tolist()),
                                 GE, rhs / scale, "gomory")
    viol = row.violation(x)
    if viol <= tol:
        return None
    return Cut(row, viol, "gomory")
