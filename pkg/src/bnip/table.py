"""Candidate families, score tables and networks.

A :class:`ScoreTable` fixes the integer program's variable space: every
candidate family ``(child, parents)`` gets a dense index (its family
variable id) in node order, and within a node candidates are kept sorted
by score, best first.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


def set_key(parents: Iterable[int]) -> tuple[int, ...]:
    """Sort key used wherever parent sets must be ordered deterministically."""
    return tuple(sorted(parents))


def to_mask(nodes: Iterable[int]) -> int:
    mask = 0
    for v in nodes:
        mask |= 1 << v
    return mask


@dataclass(frozen=True)
class CandidateFamily:
    """One ``parents -> child`` choice together with its local score (nats)."""

    child: int
    parents: frozenset
    score: float

    def __post_init__(self):
        if self.child in self.parents:
            raise ValueError(f"node {self.child} cannot be its own parent")
        if not np.isfinite(self.score):
            raise ValueError(f"non-finite score for node {self.child}")

    @property
    def mask(self) -> int:
        return to_mask(self.parents)


def _order(cands: Iterable[CandidateFamily]) -> tuple[CandidateFamily, ...]:
    # score descending, ties towards the lexicographically smaller parent set
    return tuple(sorted(cands, key=lambda c: (-c.score, set_key(c.parents))))


class ScoreTable:
    """Per-node candidate parent sets with their local scores.

    Args:
        names: node labels, in index order.
        candidates: one iterable of :class:`CandidateFamily` per node.
        palim: parent set size limit the table was built with. Defaults to
            the largest parent set present.
    """

    def __init__(self, names: Sequence[str], candidates: Sequence[Iterable[CandidateFamily]],
                 palim: int | None = None):
        if len(names) != len(candidates):
            raise ValueError("need one candidate list per node")
        if len(set(names)) != len(names):
            raise ValueError("node names must be unique")
        self.names = tuple(names)
        per_node = []
        for v, cands in enumerate(candidates):
            cands = _order(cands)
            if not cands:
                raise ValueError(f"node {self.names[v]} has no candidate parent sets")
            seen = set()
            for c in cands:
                if c.child != v:
                    raise ValueError(f"candidate for node {c.child} listed under node {v}")
                if not all(0 <= u < len(names) for u in c.parents):
                    raise ValueError(f"unknown parent in candidate for node {self.names[v]}")
                if c.parents in seen:
                    raise ValueError(f"duplicate parent set {set_key(c.parents)} for node {self.names[v]}")
                seen.add(c.parents)
            per_node.append(cands)
        self._per_node = tuple(per_node)
        self.families: tuple[CandidateFamily, ...] = tuple(c for cs in per_node for c in cs)
        self._offsets = np.cumsum([0] + [len(cs) for cs in per_node])
        self._index = {(c.child, c.parents): i for i, c in enumerate(self.families)}
        biggest = max(len(c.parents) for c in self.families)
        self.palim = biggest if palim is None else palim
        self.scores = np.array([c.score for c in self.families])
        self.children = np.array([c.child for c in self.families], dtype=int)
        self.masks = [c.mask for c in self.families]

    @property
    def p(self) -> int:
        return len(self.names)

    @property
    def n(self) -> int:
        """Number of family variables."""
        return len(self.families)

    def candidates(self, v: int) -> tuple[CandidateFamily, ...]:
        return self._per_node[v]

    def ids(self, v: int) -> range:
        return range(int(self._offsets[v]), int(self._offsets[v + 1]))

    def family_id(self, v: int, parents: Iterable[int]) -> int | None:
        return self._index.get((v, frozenset(parents)))

    def node_index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown node {name!r}") from None

    def with_candidates(self, candidates: Sequence[Iterable[CandidateFamily]]) -> "ScoreTable":
        return ScoreTable(self.names, candidates, self.palim)

    def network(self, family_ids: Iterable[int]) -> "Network":
        """Build a :class:`Network` from one chosen family id per node."""
        chosen: list = [None] * self.p
        for i in family_ids:
            fam = self.families[i]
            if chosen[fam.child] is not None:
                raise ValueError(f"two families chosen for node {self.names[fam.child]}")
            chosen[fam.child] = fam
        if any(f is None for f in chosen):
            raise ValueError("no family chosen for some node")
        # summed in node order so equal networks get bit-identical scores
        return Network(self.names, tuple(f.parents for f in chosen), float(sum(f.score for f in chosen)))

    def family_ids_of(self, net: "Network") -> list[int] | None:
        """Family ids selected by ``net``, or None if some family is not a candidate."""
        out = []
        for v, ps in enumerate(net.parents):
            i = self._index.get((v, ps))
            if i is None:
                return None
            out.append(i)
        return out

    def vector(self, net: "Network") -> np.ndarray:
        """0/1 family-variable vector of ``net``; raises KeyError if not representable."""
        ids = self.family_ids_of(net)
        if ids is None:
            raise KeyError("network uses a parent set that is not a candidate")
        x = np.zeros(self.n)
        x[ids] = 1.0
        return x

    def score_of(self, net: "Network") -> float:
        ids = self.family_ids_of(net)
        if ids is None:
            raise KeyError("network uses a parent set that is not a candidate")
        return float(sum(self.families[i].score for i in ids))

    def __repr__(self):
        return f"ScoreTable(p={self.p}, n={self.n}, palim={self.palim})"


@dataclass(frozen=True)
class Network:
    """A learned structure: one parent set per node plus its total score."""

    names: tuple
    parents: tuple
    score: float = field(default=float("nan"), compare=False)

    @classmethod
    def empty(cls, names: Sequence[str], score: float = float("nan")) -> "Network":
        return cls(tuple(names), tuple(frozenset() for _ in names), score)

    @property
    def p(self) -> int:
        return len(self.names)

    def edges(self) -> list[tuple[int, int]]:
        return [(u, v) for v, ps in enumerate(self.parents) for u in sorted(ps)]

    def topological_order(self) -> list[int] | None:
        """Kahn's algorithm; None when the parent sets contain a cycle."""
        indeg = [len(ps) for ps in self.parents]
        kids: list[list[int]] = [[] for _ in self.parents]
        for u, v in self.edges():
            kids[u].append(v)
        ready = [v for v in range(self.p) if indeg[v] == 0]
        order = []
        while ready:
            u = ready.pop()
            order.append(u)
            for v in kids[u]:
                indeg[v] -= 1
                if indeg[v] == 0:
                    ready.append(v)
        return order if len(order) == self.p else None

    def is_acyclic(self) -> bool:
        return self.topological_order() is not None

    def key(self) -> tuple:
        """Lexicographic comparison key used to break score ties."""
        return tuple(set_key(ps) for ps in self.parents)

    def rescored(self, table: ScoreTable) -> "Network":
        return Network(self.names, self.parents, table.score_of(self))

    def __str__(self):
        return "\n".join(
            f"{self.names[v]} <- {{{','.join(self.names[u] for u in sorted(ps))}}}"
            for v, ps in enumerate(self.parents))
