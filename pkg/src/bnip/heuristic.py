"""Greedy sink-finding heuristic that rounds an LP point into an acyclic network."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lp import INT_TOL, _values
from .table import Network, ScoreTable


@dataclass
class SinkState:
    """Working state of one heuristic run.

    ``ok[v]`` lists the still-available candidate ids of node ``v`` in
    score order; ``selected`` holds ``(node, family id)`` picks, sinks first.
    """

    ok: list
    selected: list = field(default_factory=list)
    done: int = 0  # bitmask of selected nodes

    @classmethod
    def initial(cls, st: ScoreTable, fix: dict | None = None) -> "SinkState | None":
        fix = fix or {}
        ok = []
        for v in range(st.p):
            ids = list(st.ids(v))
            forced = [i for i in ids if fix.get(i) == 1]
            if len(forced) > 1:
                return None
            avail = forced or [i for i in ids if fix.get(i) != 0]
            if not avail:
                return None
            ok.append(avail)
        return cls(ok)

    def make_sink(self, v: int, masks: list, fix: dict) -> bool:
        """Commit ``v`` to its best available family and drop ``v`` from every other node's options.

        Returns False (abort) if that would drop a family fixed to 1 or
        leave some node without options.
        """
        self.selected.append((v, self.ok[v][0]))
        self.done |= 1 << v
        bit = 1 << v
        for u in range(len(self.ok)):
            if self.done >> u & 1:
                continue
            kept = [i for i in self.ok[u] if not masks[i] & bit]
            if len(kept) < len(self.ok[u]):
                if not kept or any(fix.get(i) == 1 for i in self.ok[u] if masks[i] & bit):
                    return False
                self.ok[u] = kept
        return True


def _integral_network(x: np.ndarray, st: ScoreTable, fix: dict) -> Network | None:
    if not np.all(np.minimum(x, 1.0 - x) <= INT_TOL):
        return None
    chosen = np.nonzero(x > 0.5)[0]
    if len(chosen) != st.p or sorted(st.children[chosen].tolist()) != list(range(st.p)):
        return None
    if any(round(x[i]) != val for i, val in fix.items()):
        return None
    net = st.network(chosen.tolist())
    return net if net.is_acyclic() else None


def sink_find(xstar, st: ScoreTable, fix: dict | None = None) -> Network | None:
    """Build an acyclic network from ``xstar``, or None if the run aborts.

    Repeatedly picks the node whose best available parent set is cheapest
    to commit to, makes it the next sink, and rules out every parent set of
    the remaining nodes that contains it. The first pick costs
    ``1 - x(best)``; later picks cost ``sum(x over available) - x(best)``.
    A family fixed to 1 is the only available option of its node; ruling it
    out aborts the run. An integral acyclic point is returned unchanged.
    """
    x = _values(xstar)
    fix = fix or {}
    net = _integral_network(x, st, fix)
    if net is not None:
        return net
    state = SinkState.initial(st, fix)
    if state is None:
        return None
    masks = st.masks
    remaining = list(range(st.p))
    first = True
    while remaining:
        best_v, best_cost = -1, np.inf
        for v in remaining:  # ascending index, so strict < keeps the lowest on ties
            ok = state.ok[v]
            top = x[ok[0]]
            cost = 1.0 - top if first else float(x[ok].sum()) - top
            if cost < best_cost - 1e-12:
                best_v, best_cost = v, cost
        remaining.remove(best_v)
        first = False
        if not state.make_sink(best_v, masks, fix):
            return None
    return st.network([fam for _, fam in state.selected])
