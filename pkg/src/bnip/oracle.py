"""Ground truth for tests and audits: DAG enumeration, exhaustive ranking and subset DP.

These are deliberately simple and exponential; they are test instruments,
usable up to about five (enumeration) or twenty (DP) nodes.
"""
from __future__ import annotations

from functools import lru_cache
from itertools import combinations, product
from math import comb

import numpy as np

from .table import CandidateFamily, Network, ScoreTable


def count_dags(p: int) -> int:
    """Number of labelled DAGs on ``p`` nodes (Robinson's recurrence)."""
    a = [1]
    for n in range(1, p + 1):
        a.append(sum((-1) ** (k + 1) * comb(n, k) * 2 ** (k * (n - k)) * a[n - k] for k in range(1, n + 1)))
    return a[p]


def _subsets(items):
    for k in range(len(items) + 1):
        yield from combinations(items, k)


@lru_cache(maxsize=None)
def _dags_on(nodes: frozenset) -> tuple:
    """All DAGs on ``nodes`` as tuples of (node, parents) pairs.

    Each DAG is produced exactly once by peeling off its (non-empty) set of
    source nodes: every node of the remainder that is a source there must
    take at least one parent from the peeled set.
    """
    if not nodes:
        return ((),)
    out = []
    ordered = sorted(nodes)
    for k in range(1, len(ordered) + 1):
        for sources in combinations(ordered, k):
            rest = nodes - frozenset(sources)
            src_families = tuple((s, frozenset()) for s in sources)
            for sub in _dags_on(rest):
                choices = []
                for v, ps in sub:
                    opts = [frozenset(extra) for extra in _subsets(sources)]
                    if not ps:
                        opts = [o for o in opts if o]
                    choices.append([(v, ps | o) for o in opts])
                for pick in product(*choices):
                    out.append(src_families + pick)
    return tuple(out)


def enumerate_dags(p: int, names=None) -> list[Network]:
    """Every labelled DAG on ``p`` nodes, each exactly once."""
    if p > 5:
        raise ValueError("enumeration is limited to p <= 5")
    names = tuple(names or (str(i) for i in range(p)))
    out = []
    for dag in _dags_on(frozenset(range(p))):
        parents = [frozenset()] * p
        for v, ps in dag:
            parents[v] = ps
        out.append(Network(names, tuple(parents)))
    return out


def dag_vectors(st: ScoreTable, dags=None) -> np.ndarray:
    """Family-variable vectors of all DAGs representable in ``st`` (one per row)."""
    dags = enumerate_dags(st.p, st.names) if dags is None else dags
    rows = []
    for dag in dags:
        ids = st.family_ids_of(dag)
        if ids is not None:
            x = np.zeros(st.n)
            x[ids] = 1.0
            rows.append(x)
    return np.array(rows)


def exhaustive_best(st: ScoreTable, limit: int | None = None) -> list[Network]:
    """All acyclic networks representable in ``st``, best first.

    Built node by node with an incremental reachability check, so only
    acyclic partial assignments are extended. Ties are broken by the
    lexicographic network key.
    """
    p = st.p
    results = []
    parents: list = [None] * p

    # reach[u]: mask of proper descendants of u among the families chosen so far
    def extend(v, reach, score):
        if v == p:
            results.append(Network(st.names, tuple(parents), score))
            return
        for fam in st.candidates(v):
            pm = fam.mask
            if reach[v] & pm:
                continue  # a parent already descends from v
            down = reach[v] | (1 << v)
            new_reach = [r | down if (pm >> u) & 1 or r & pm else r for u, r in enumerate(reach)]
            parents[v] = fam.parents
            extend(v + 1, new_reach, score + fam.score)
        parents[v] = None

    extend(0, [0] * p, 0.0)
    results.sort(key=lambda net: (-net.score, net.key()))
    return results[:limit] if limit else results


def dp_best(st: ScoreTable) -> Network:
    """Optimal network by dynamic programming over node subsets (sink decomposition)."""
    p = st.p
    full = (1 << p) - 1
    cands = [[(c.mask, c.score, c.parents) for c in st.candidates(v)] for v in range(p)]

    def best_family(v, allowed):
        # candidate lists are score-sorted, so the first fitting one is best
        for mask, score, ps in cands[v]:
            if mask & ~allowed == 0:
                return score, ps
        return None

    best = np.full(1 << p, -np.inf)
    choice = [None] * (1 << p)
    best[0] = 0.0
    for s in range(1, full + 1):
        top, arg = -np.inf, None
        bits = s
        while bits:
            low = bits & -bits
            v = low.bit_length() - 1
            bits ^= low
            rest = s ^ low
            if best[rest] == -np.inf:
                continue
            fam = best_family(v, rest)
            if fam is None:
                continue
            val = best[rest] + fam[0]
            if val > top:
                top, arg = val, (v, fam[1])
        best[s], choice[s] = top, arg
    if best[full] == -np.inf:
        raise ValueError("no acyclic network is representable in this table")
    parents: list = [None] * p
    s = full
    while s:
        v, ps = choice[s]
        parents[v] = ps
        s &= ~(1 << v)
    net = Network(st.names, tuple(parents))
    return Network(st.names, net.parents, st.score_of(net))


def random_score_table(p: int, palim: int, rng: np.random.Generator, prune: bool = False,
                       names=None) -> ScoreTable:
    """Random local scores for every parent set of size <= ``palim``.

    Scores mimic the shape of decomposable scores: a per-node baseline,
    a random gain per potential parent, a complexity penalty growing with
    the set size, and independent noise.
    """
    from .scoring import prune_dominated

    names = tuple(names or (f"X{i}" for i in range(p)))
    palim = min(palim, p - 1)
    cands = []
    for v in range(p):
        base = -rng.uniform(20.0, 40.0)
        gain = rng.exponential(3.0, size=p)
        others = [u for u in range(p) if u != v]
        fams = []
        for size in range(palim + 1):
            for ps in combinations(others, size):
                s = base + sum(gain[u] for u in ps) - 1.5 * size ** 1.5 + rng.normal(0.0, 1.0)
                fams.append(CandidateFamily(v, frozenset(ps), round(float(s), 6)))
        cands.append(prune_dominated(fams) if prune else fams)
    return ScoreTable(names, cands, palim)


def random_interaction_table(p: int, rng: np.random.Generator, palim: int = 3, penalty: float = 4.0,
                             pair_scale: float = 3.0, triple_scale: float = 4.0, noise: float = 0.3,
                             prune: bool = True, names=None) -> ScoreTable:
    """Random table driven by symmetric pair and triple interaction weights.

    A parent set scores the pair weights linking it to the child plus the
    triple weights of every two parents taken with the child. Symmetric
    weights make directed cycles as attractive as their reversals, which
    produces strongly fractional relaxations (cyclic triangles in particular).
    """
    from .scoring import prune_dominated

    names = tuple(names or (f"X{i}" for i in range(p)))
    palim = min(palim, p - 1)
    w = rng.exponential(pair_scale, (p, p))
    w = (w + w.T) / 2
    tri = {t: rng.exponential(triple_scale) for t in combinations(range(p), 3)}
    cands = []
    for v in range(p):
        others = [u for u in range(p) if u != v]
        fams = []
        for size in range(palim + 1):
            for ps in combinations(others, size):
                s = (-penalty * size + sum(w[u, v] for u in ps)
                     + sum(tri[tuple(sorted((a, b, v)))] for a, b in combinations(ps, 2))
                     + rng.normal(0.0, noise))
                fams.append(CandidateFamily(v, frozenset(ps), round(float(s), 6)))
        cands.append(prune_dominated(fams) if prune else fams)
    return ScoreTable(names, cands, palim)


def random_convex_point(st: ScoreTable, rng: np.random.Generator, density: float = 0.5) -> np.ndarray:
    """Fractional point meeting every convexity equality, with sparse support."""
    x = np.zeros(st.n)
    for v in range(st.p):
        ids = np.array(st.ids(v))
        k = max(1, int(rng.binomial(len(ids), density)))
        chosen = rng.choice(ids, size=min(k, len(ids)), replace=False)
        w = rng.random(len(chosen))
        if rng.random() < 0.3:
            w = np.round(w * 2) + 1e-3  # push towards half-integral mass
        x[chosen] = w / w.sum()
    return x

