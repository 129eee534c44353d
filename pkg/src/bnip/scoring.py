"""BDeu local scores, candidate parent set generation and dominance pruning."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from itertools import combinations
from math import lgamma, prod
from typing import Iterable, Sequence

import numpy as np

from .data_io import Dataset
from .table import CandidateFamily, ScoreTable, set_key

DEFAULT_ESS = 1.0
DEFAULT_PALIM = 3


@dataclass(frozen=True)
class ContingencyCounts:
    """Child-value counts for each parent configuration seen in the data.

    ``counts`` maps a tuple of parent values (ordered as ``parents``) to a
    length ``r_child`` integer vector. Unobserved configurations are absent.
    """

    child: int
    parents: tuple
    counts: dict

    def total(self) -> int:
        return int(sum(int(c.sum()) for c in self.counts.values()))


def count_configurations(data: Dataset, v: int, parents: Iterable[int]) -> ContingencyCounts:
    parents = set_key(parents)
    if v in parents:
        raise ValueError("child cannot be among its parents")
    r_v = data.arities[v]
    counts: dict = {}
    if data.N == 0:
        return ContingencyCounts(v, parents, counts)
    rows = data.rows
    if parents:
        # mixed-radix code for each row's parent configuration
        code = np.zeros(data.N, dtype=np.int64)
        for u in parents:
            code = code * data.arities[u] + rows[:, u]
    else:
        code = np.zeros(data.N, dtype=np.int64)
    keys, inverse = np.unique(code, return_inverse=True)
    table = np.zeros((len(keys), r_v), dtype=np.int64)
    np.add.at(table, (inverse.ravel(), rows[:, v]), 1)
    for k, key in enumerate(keys.tolist()):
        config = []
        for u in reversed(parents):
            key, val = divmod(key, data.arities[u])
            config.append(val)
        counts[tuple(reversed(config))] = table[k]
    return ContingencyCounts(v, parents, counts)


def bdeu_local_score(counts: ContingencyCounts, r_v: int, q_w: int, ess: float = DEFAULT_ESS) -> float:
    """Log BDeu marginal likelihood of one family, in nats.

    ``q_w`` is the number of parent configurations (product of parent
    arities, 1 for no parents). Configurations absent from ``counts``
    contribute exactly zero.
    """
    if ess <= 0:
        raise ValueError("ess must be positive")
    a_j = ess / q_w
    a_jk = ess / (q_w * r_v)
    lg_aj = lgamma(a_j)
    lg_ajk = lgamma(a_jk)
    score = 0.0
    for n_jk in counts.counts.values():
        n_j = int(n_jk.sum())
        if n_j == 0:
            continue
        score += lg_aj - lgamma(a_j + n_j)
        for n in n_jk.tolist():
            if n:
                score += lgamma(a_jk + n) - lg_ajk
    return score


def family_score(data: Dataset, v: int, parents: Iterable[int], ess: float = DEFAULT_ESS) -> float:
    parents = set_key(parents)
    q_w = prod(data.arities[u] for u in parents)
    return bdeu_local_score(count_configurations(data, v, parents), data.arities[v], q_w, ess)


def prune_dominated(cands: Sequence[CandidateFamily]) -> list[CandidateFamily]:
    """Drop every candidate whose parent set has a retained proper subset scoring at least as well.

    Candidates are visited by increasing parent set size, so a dominated set
    is always dominated by a *retained* subset (dominance is transitive).
    """
    if len({c.child for c in cands}) > 1:
        raise ValueError("all candidates must share one child")
    kept: list[CandidateFamily] = []
    for c in sorted(cands, key=lambda c: (len(c.parents), set_key(c.parents))):
        if not any(k.parents < c.parents and k.score >= c.score for k in kept):
            kept.append(c)
    return sorted(kept, key=lambda c: (-c.score, set_key(c.parents)))


def enumerate_candidates(data: Dataset, v: int, palim: int = DEFAULT_PALIM, ess: float = DEFAULT_ESS,
                         prune: bool = True) -> list[CandidateFamily]:
    others = [u for u in range(data.p) if u != v]
    palim = min(palim, len(others))
    if palim < 0:
        raise ValueError("palim must be non-negative")
    cands = [CandidateFamily(v, frozenset(ps), family_score(data, v, ps, ess))
             for size in range(palim + 1) for ps in combinations(others, size)]
    return prune_dominated(cands) if prune else cands


def _node_candidates(args):
    data, v, palim, ess, prune = args
    return enumerate_candidates(data, v, palim, ess, prune)


def score_dataset(data: Dataset, palim: int = DEFAULT_PALIM, ess: float = DEFAULT_ESS,
                  prune: bool = True, workers: int = 1) -> ScoreTable:
    """Score every candidate family of every node and build a :class:`ScoreTable`."""
    jobs = [(data, v, palim, ess, prune) for v in range(data.p)]
    if workers > 1 and data.p > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            cands = list(pool.map(_node_candidates, jobs))
    else:
        cands = [_node_candidates(j) for j in jobs]
    return ScoreTable(data.names, cands, min(palim, data.p - 1))


def prune_table(table: ScoreTable) -> ScoreTable:
    return table.with_candidates([prune_dominated(table.candidates(v)) for v in range(table.p)])
