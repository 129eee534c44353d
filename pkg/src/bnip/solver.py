"""Branch and cut over family variables, with propagation and k-best enumeration."""
from __future__ import annotations

import heapq
import logging
import time
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .heuristic import sink_find
from .lp import FEAS_TOL, INFEASIBLE, INT_TOL, LpError, LpSolution, WarmStart, solve_lp
from .model import GE, IpModel, exclusion_constraint
from .separation import (VIOL_TOL, Cut, find_cluster_cuts, find_convex4b_cuts,
                         find_gomory_cuts)
from .table import Network, ScoreTable

log = logging.getLogger(__name__)

GAP_TOL = 1e-9
PRUNE_TOL = 1e-9
ROOT_ROUNDS = 30
NODE_ROUNDS = 5
TAILOFF = 1e-4
# also branch when this many cut rounds in a row moved the bound by less than TAILOFF
STALL_ROUNDS = 3

OPTIMAL, TIMEOUT, INFEASIBLE_STATUS = "optimal", "feasible-timeout", "infeasible"


@dataclass
class SolveParams:
    """Limits and feature switches for :func:`branch_and_cut`.

    ``on_lp`` is called as ``on_lp(solution, fixings)`` after every LP solve;
    ``audit`` keeps every emitted cut in the result for validity checks.
    """

    time_limit: float = 7200.0
    node_limit: int | None = None
    sink_heuristic: bool = True
    propagation: bool = True
    gomory: bool = True
    convex4b: bool = False
    audit: bool = False
    progress_every: float = 10.0
    on_lp: Callable | None = None


@dataclass(order=True)
class SearchNode:
    sort_key: tuple
    fix: dict = field(compare=False)
    rows: tuple = field(compare=False, default=())  # cuts carried into this node's LP
    bound: float = field(compare=False, default=np.inf)
    depth: int = field(compare=False, default=0)
    warm: WarmStart | None = field(compare=False, default=None)


@dataclass
class SolveResult:
    best: Network | None
    best_score: float
    upper_bound: float
    status: str
    stats: dict = field(default_factory=dict)
    cuts: list = field(default_factory=list, repr=False)

    @property
    def gap(self) -> float:
        if self.best is None:
            return float("inf")
        if self.best_score == 0.0:
            return 0.0 if self.upper_bound <= self.best_score + GAP_TOL else float("inf")
        return max(0.0, (self.upper_bound - self.best_score) / abs(self.best_score))


class Conflict(Exception):
    pass


def propagate(fix: dict, st: ScoreTable) -> dict | None:
    """Close ``fix`` under the propagation rules; None signals a conflict.

    (a) a family fixed to 1 zeroes its node's other candidates; (b) a node
    with a single unexcluded candidate gets it fixed to 1; (c) a candidate
    whose parents include a descendant of its child in the graph of
    1-fixed families is fixed to 0.
    """
    fix = dict(fix)
    try:
        changed = True
        while changed:
            changed = False
            chosen: dict = {}
            for i, val in fix.items():
                if val == 1:
                    v = int(st.children[i])
                    if v in chosen and chosen[v] != i:
                        raise Conflict
                    chosen[v] = i
            for v in range(st.p):
                ids = st.ids(v)
                if v in chosen:
                    for i in ids:
                        if i != chosen[v] and fix.get(i) != 0:
                            if fix.get(i) == 1:
                                raise Conflict
                            fix[i] = 0
                            changed = True
                    continue
                open_ids = [i for i in ids if fix.get(i) != 0]
                if not open_ids:
                    raise Conflict
                if len(open_ids) == 1:
                    fix[open_ids[0]] = 1
                    chosen[v] = open_ids[0]
                    changed = True
            reach = _descendants(chosen, st)
            if reach is None:
                raise Conflict
            for v in range(st.p):
                if v in chosen or not reach[v]:
                    continue
                for i in st.ids(v):
                    if fix.get(i) is None and st.masks[i] & reach[v]:
                        fix[i] = 0
                        changed = True
    except Conflict:
        return None
    return fix


def _descendants(chosen: dict, st: ScoreTable) -> list | None:
    """Descendant masks in the graph of 1-fixed families, or None if it has a cycle."""
    p = st.p
    children = [0] * p
    for v, i in chosen.items():
        m = st.masks[i]
        for u in range(p):
            if (m >> u) & 1:
                children[u] |= 1 << v
    reach = list(children)
    changed = True
    while changed:
        changed = False
        for u in range(p):
            new = reach[u]
            m = reach[u]
            while m:
                low = m & -m
                new |= reach[low.bit_length() - 1]
                m ^= low
            if new != reach[u]:
                reach[u] = new
                changed = True
    if any((reach[u] >> u) & 1 for u in range(p)):
        return None
    return reach


def select_branch_var(xstar, objective) -> int:
    """Most fractional variable; ties by larger objective coefficient, then lower index."""
    x = xstar.values if isinstance(xstar, LpSolution) else np.asarray(xstar, dtype=float)
    frac = np.minimum(x, 1.0 - x)
    cand = np.nonzero(frac > INT_TOL)[0]
    if not len(cand):
        raise ValueError("no fractional variable to branch on")
    best = max(cand.tolist(), key=lambda j: (frac[j], objective[j], -j))
    return int(best)


def _nearly_parallel(row, others, limit: float = 0.999) -> bool:
    a = dict(row.coeffs)
    na = np.linalg.norm(row.values)
    for other in others:
        if other.sense != row.sense:
            continue
        dot = sum(a.get(v, 0.0) * c for v, c in other.coeffs)
        if dot > limit * na * np.linalg.norm(other.values):
            return True
    return False


def _integral_ids(x: np.ndarray) -> list[int] | None:
    if np.all(np.minimum(x, 1.0 - x) <= INT_TOL):
        return np.nonzero(x > 0.5)[0].tolist()
    return None


class _Search:
    def __init__(self, model: IpModel, params: SolveParams):
        self.model = model
        self.st = model.table
        self.params = params
        self.pool: dict = {}  # globally valid cuts, insertion ordered
        self.best: Network | None = None
        self.best_score = -np.inf
        self.stats = Counter()
        self.emitted: list[Cut] = []
        self.start = time.monotonic()
        self.last_log = self.start
        self.counter = 0
        self._pool_stale = True

    # incumbent ----------------------------------------------------------
    def offer(self, net: Network, source: str) -> None:
        if net.topological_order() is None:  # independent of the LP rows
            return
        score = net.score
        better = score > self.best_score + 1e-12
        tie = abs(score - self.best_score) <= 1e-12 and self.best is not None and net.key() < self.best.key()
        if better or tie:
            self.best, self.best_score = net, score
            self.stats[f"incumbent_{source}"] += 1

    # LP -----------------------------------------------------------------
    def lp(self, rows, fix, warm) -> LpSolution:
        try:
            sol = solve_lp(self.model, rows, fix, warm)
        except LpError:
            self.stats["lp_retries"] += 1
            try:
                sol = solve_lp(self.model, rows, fix, None)
            except LpError:
                # dense Gomory rows are the usual source of trouble; the LP
                # without them is still a valid (weaker) relaxation
                rows[:] = [r for r in rows if r.tag != "gomory"]
                sol = solve_lp(self.model, rows, fix, None)
        self.stats["lp_solves"] += 1
        self.stats["pivots"] += sol.pivots
        if self.params.on_lp is not None:
            self.params.on_lp(sol, fix)
        return sol

    def add_cuts(self, cuts, active: list, in_lp: set) -> list:
        fresh = []
        for c in cuts:
            row = c.inequality
            if row in in_lp:
                continue
            if c.source == "gomory" and _nearly_parallel(row, active):
                self.stats["gomory_parallel"] += 1
                continue
            active.append(row)
            in_lp.add(row)
            fresh.append(c)
            if row in self.pool:
                continue
            if c.source != "gomory":
                self.pool[row] = None
                self._pool_stale = True
            self.stats[f"cuts_{c.source}"] += 1
            if self.params.audit:
                self.emitted.append(c)
        return fresh

    def pool_violated(self, x: np.ndarray, in_lp: set) -> list:
        """Pool rows left out of the current LP that ``x`` violates."""
        if not self.pool:
            return []
        if self._pool_stale:
            rows = list(self.pool)
            A = np.zeros((len(rows), self.st.n))
            b = np.empty(len(rows))
            for k, row in enumerate(rows):
                sign = -1.0 if row.sense == GE else 1.0  # every pool row as "<="
                A[k, row.index] = sign * row.values
                b[k] = sign * row.rhs
            self._pool_rows, self._pool_A, self._pool_b = rows, A, b
            self._pool_stale = False
        hit = np.nonzero(self._pool_A @ x - self._pool_b > VIOL_TOL)[0]
        return [self._pool_rows[k] for k in hit.tolist() if self._pool_rows[k] not in in_lp]

    def separate(self, sol: LpSolution) -> list:
        cuts = find_cluster_cuts(sol, self.st)
        if cuts:
            return cuts
        if self.params.convex4b:
            cuts = find_convex4b_cuts(sol, self.st)
        if self.params.gomory:
            cuts = cuts + find_gomory_cuts(sol, self.model)
        return cuts

    # node ---------------------------------------------------------------
    def process(self, node: SearchNode):
        """Cut loop at one node; returns (solution to branch on, rows for the children) or None.

        The LP carries the model rows plus an active subset of cuts. Pool
        cuts left out are re-added as soon as the LP point violates them.
        """
        active = list(node.rows)
        in_lp = set(active)
        warm = node.warm
        cap = ROOT_ROUNDS if node.depth == 0 else NODE_ROUNDS
        rounds = 0
        history: list[float] = []
        while True:
            sol = self.lp(active, node.fix, warm)
            if len(in_lp) != len(active):
                in_lp = set(active)  # the LP fallback may have dropped rows
            if sol.status == INFEASIBLE:
                return None
            if not sol.optimal:
                raise LpError(f"LP ended with status {sol.status}")
            warm = sol.warm
            if sol.objective <= self.best_score + PRUNE_TOL:
                return None
            x = sol.values
            missing = self.pool_violated(x, in_lp)
            if missing:
                active += missing
                in_lp.update(missing)
                continue
            ids = _integral_ids(x)
            if self.params.sink_heuristic and ids is None:
                self.stats["heuristic_calls"] += 1
                net = sink_find(sol, self.st, node.fix)
                if net is not None and self.model.admits(net):
                    self.offer(net, "heuristic")
            if ids is not None:
                net = self.st.network(ids)
                if net.is_acyclic():
                    self.offer(net, "lp")
                    return None
                cuts = find_cluster_cuts(sol, self.st)
                if not self.add_cuts(cuts, active, in_lp):
                    raise RuntimeError("cyclic integer point left uncut")
                continue
            history.append(sol.objective)
            stalled = len(history) > STALL_ROUNDS and history[-STALL_ROUNDS - 1] - history[-1] < TAILOFF
            fresh = [] if stalled else self.add_cuts(self.separate(sol), active, in_lp)
            if not fresh or rounds + 1 >= cap or sum(c.violation for c in fresh) < TAILOFF:
                # children keep only the cuts that bind at this point
                binding = tuple(r for r in active if abs(r.lhs(x) - r.rhs) <= FEAS_TOL)
                return sol, binding
            rounds += 1

    def children(self, node: SearchNode, sol: LpSolution, rows: tuple) -> list:
        j = select_branch_var(sol, self.model.objective)
        self.stats["branchings"] += 1
        out = []
        for val in (1, 0):
            fix = dict(node.fix)
            fix[j] = val
            if self.params.propagation:
                fix = propagate(fix, self.st)
                if fix is None:
                    self.stats["propagation_conflicts"] += 1
                    continue
            self.counter += 1
            out.append(SearchNode((-sol.objective, self.counter), fix, rows, sol.objective,
                                  node.depth + 1, sol.warm))
        return out

    def progress(self, open_nodes, force=False):
        now = time.monotonic()
        if not force and now - self.last_log < self.params.progress_every:
            return
        self.last_log = now
        ub = self.upper_bound(open_nodes)
        gap = SolveResult(self.best, self.best_score, ub, "").gap
        log.info("time %.1fs nodes %d incumbent %.6f bound %.6f gap %.4f%%",
                 now - self.start, self.stats["nodes"], self.best_score, ub, 100 * gap)

    def upper_bound(self, open_nodes) -> float:
        if not open_nodes:
            return self.best_score
        return max(self.best_score, max(n.bound for n in open_nodes))

    def run(self) -> SolveResult:
        root_fix: dict | None = {}
        if self.params.propagation:
            root_fix = propagate({}, self.st)
        open_nodes: list[SearchNode] = []
        if root_fix is not None:
            open_nodes.append(SearchNode((-np.inf, 0), root_fix))
        status = OPTIMAL
        while open_nodes:
            if time.monotonic() - self.start > self.params.time_limit or (
                    self.params.node_limit is not None and self.stats["nodes"] >= self.params.node_limit):
                status = TIMEOUT
                break
            node = heapq.heappop(open_nodes)
            if node.bound <= self.best_score + PRUNE_TOL:
                continue
            self.stats["nodes"] += 1
            self.stats["max_depth"] = max(self.stats["max_depth"], node.depth)
            out = self.process(node)
            if out is not None:
                sol, local = out
                for child in self.children(node, sol, local):
                    heapq.heappush(open_nodes, child)
            self.progress(open_nodes)
        open_nodes = [n for n in open_nodes if n.bound > self.best_score + PRUNE_TOL]
        ub = self.upper_bound(open_nodes) if status == TIMEOUT else self.best_score
        if self.best is None:
            status = TIMEOUT if status == TIMEOUT else INFEASIBLE_STATUS
            ub = self.upper_bound(open_nodes) if open_nodes else -np.inf
        self.progress(open_nodes, force=True)
        stats = dict(self.stats)
        stats["time"] = time.monotonic() - self.start
        return SolveResult(self.best, float(self.best_score), float(ub), status, stats, self.emitted)


def branch_and_cut(model: IpModel, params: SolveParams | None = None) -> SolveResult:
    """Maximise the total family score over acyclic networks in ``model``.

    Status ``optimal`` means the returned network is proven best among all
    acyclic networks the table can represent that satisfy the model rows.
    """
    return _Search(model, params or SolveParams()).run()


def solve_kbest(model: IpModel, k: int, params: SolveParams | None = None) -> list[SolveResult]:
    """The ``k`` best networks, best first, found by excluding each previous answer."""
    if k < 1:
        raise ValueError("k must be at least 1")
    params = params or SolveParams()
    start = time.monotonic()
    results: list[SolveResult] = []
    current = model
    for _ in range(k):
        left = params.time_limit - (time.monotonic() - start)
        res = branch_and_cut(current, replace(params, time_limit=max(left, 0.0)))
        if res.best is None:
            break
        results.append(res)
        if res.status != OPTIMAL:
            break
        current = current.with_rows([exclusion_constraint(res.best, model.table)])
    # networks found within the pruning tolerance of each other may arrive out of order
    results.sort(key=lambda r: (-r.best_score, r.best.key()))
    return results

