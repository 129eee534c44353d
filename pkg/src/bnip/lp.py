"""Bounded-variable primal simplex for the linear relaxation.

Solves ``max c.x`` subject to the model rows plus extra rows, with every
family variable in ``[0, 1]`` (or pinned by a fixing). Each row gets a
slack column, ``a.x + s = b``, whose bounds encode the row sense:
``<=`` gives ``s >= 0``, ``>=`` gives ``s <= 0``, ``==`` gives ``s = 0``.

Phase 1 minimises the total bound infeasibility of the basic variables
(composite method), so any basis, including one inherited from a parent
search node, can seed the solve. The basis inverse is kept explicitly and
updated by elementary row transforms, with a fresh inversion every
``REFACTOR_EVERY`` pivots.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .model import EQ, GE, LE, IpModel, LinearInequality

log = logging.getLogger(__name__)

FEAS_TOL = 1e-6
OPT_TOL = 1e-7
INT_TOL = 1e-6
# entries below this are treated as exact zeros in the ratio test
ZERO_TOL = 1e-11
# Harris bound relaxation, kept below FEAS_TOL so it never triggers phase 1
HARRIS_TOL = 0.5 * FEAS_TOL
BLAND_AFTER = 1000
REFACTOR_EVERY = 100

OPTIMAL, INFEASIBLE, UNBOUNDED = "optimal", "infeasible", "unbounded-guard"


class LpError(RuntimeError):
    """Internal failure of the simplex engine (unboundedness, iteration limit)."""


@dataclass(frozen=True)
class WarmStart:
    """Basis description portable across LPs that share columns.

    Structural columns are keyed by family id, slack columns by
    ``("s", row)``.
    """

    basic: tuple
    at_upper: frozenset
    rows: frozenset = frozenset()
    # basis inverse and row order, reused when the next LP only appends rows
    row_order: tuple = field(default=(), compare=False, repr=False)
    binv: np.ndarray | None = field(default=None, compare=False, repr=False)


@dataclass
class LpSolution:
    values: np.ndarray
    objective: float
    status: str
    rows: list = field(repr=False, default_factory=list)
    warm: WarmStart | None = field(repr=False, default=None)
    pivots: int = 0
    # internals kept for tableau queries
    basic_cols: np.ndarray | None = field(repr=False, default=None)
    binv: np.ndarray | None = field(repr=False, default=None)
    matrix: np.ndarray | None = field(repr=False, default=None)
    lower: np.ndarray | None = field(repr=False, default=None)
    upper: np.ndarray | None = field(repr=False, default=None)
    at_upper: np.ndarray | None = field(repr=False, default=None)
    full: np.ndarray | None = field(repr=False, default=None)

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL

    @property
    def n(self) -> int:
        return len(self.values)

    def is_integral(self, tol: float = INT_TOL) -> bool:
        v = self.values
        return bool(np.all(np.minimum(v, 1.0 - v) <= tol))

    def basis_matrix(self) -> np.ndarray:
        return self.matrix[:, self.basic_cols]

    def basic_row(self, col: int) -> int:
        hits = np.nonzero(self.basic_cols == col)[0]
        if not len(hits):
            raise ValueError(f"column {col} is not basic")
        return int(hits[0])


def _values(x) -> np.ndarray:
    return x.values if isinstance(x, LpSolution) else np.asarray(x, dtype=float)


def _dedupe(rows: Sequence[LinearInequality]) -> list:
    seen = set()
    out = []
    for r in rows:
        if r not in seen:
            seen.add(r)
            out.append(r)
    return out


def solve_lp(model: IpModel, extra_rows: Sequence[LinearInequality] = (), fix: dict | None = None,
             warm: WarmStart | None = None, max_iter: int | None = None) -> LpSolution:
    """Maximise the model objective over its relaxation.

    Args:
        model: objective and static rows.
        extra_rows: cuts to add on top of the model rows.
        fix: ``{family id: 0 or 1}`` bound fixings.
        warm: basis from an earlier solve; ignored if it does not fit.
    """
    rows = _dedupe(list(model.rows) + list(extra_rows))
    n, m = model.n, len(rows)
    A = np.zeros((m, n))
    b = np.empty(m)
    lower = np.zeros(n + m)
    upper = np.ones(n + m)
    for r, row in enumerate(rows):
        A[r, row.index] = row.values
        b[r] = row.rhs
        if row.sense == LE:
            lower[n + r], upper[n + r] = 0.0, np.inf
        elif row.sense == GE:
            lower[n + r], upper[n + r] = -np.inf, 0.0
        else:
            lower[n + r], upper[n + r] = 0.0, 0.0
    for j, val in (fix or {}).items():
        lower[j] = upper[j] = float(val)
    M = np.hstack([A, np.eye(m)])
    cost = np.concatenate([model.objective, np.zeros(m)])
    keys = list(range(n)) + [("s", row) for row in rows]
    engine = _Simplex(M, b, cost, lower, upper, n)
    engine.start(keys, warm)
    status = engine.run(max_iter or max(20000, 50 * (n + m)))
    x = engine.x[:n].copy()
    if status == OPTIMAL:
        np.clip(x, lower[:n], upper[:n], out=x)
    basic = tuple(keys[j] for j in engine.basis)
    at_up = frozenset(keys[j] for j in range(n + m) if not engine.is_basic[j] and engine.at_upper[j])
    sol = LpSolution(values=x, objective=float(model.objective @ x), status=status, rows=rows,
                     warm=WarmStart(basic, at_up, frozenset(rows), tuple(rows), engine.binv),
                     pivots=engine.pivots,
                     basic_cols=np.array(engine.basis), binv=engine.binv, matrix=M,
                     lower=lower, upper=upper, at_upper=engine.at_upper.copy(), full=engine.x.copy())
    if status == OPTIMAL:
        worst = max((r.violation(x) for r in rows), default=0.0)
        if worst > FEAS_TOL:
            log.warning("LP solution violates a row by %.3g", worst)
    return sol


class _Simplex:
    def __init__(self, M, b, cost, lower, upper, n):
        self.M, self.b, self.cost = M, b, cost
        self.lower, self.upper = lower, upper
        self.n = n
        self.m = M.shape[0]
        self.pivots = 0

    def start(self, keys, warm):
        m, N = self.m, self.M.shape[1]
        self.is_basic = np.zeros(N, dtype=bool)
        self.at_upper = np.isinf(self.lower)  # >= slacks sit at their upper bound 0
        basis = None
        if warm is not None:
            basis = self._warm_basis(keys, warm)
        if basis is None:
            basis = list(range(self.n, self.n + m))
            self.binv = np.eye(m)
        self.basis = basis
        self.is_basic[basis] = True
        if warm is not None:
            pos = {k: j for j, k in enumerate(keys)}
            for k in warm.at_upper:
                j = pos.get(k)
                if j is not None and not self.is_basic[j] and np.isfinite(self.upper[j]):
                    self.at_upper[j] = True
        self.at_upper[np.isinf(self.lower)] = True
        self.at_upper[np.isinf(self.upper)] = False
        self._recompute_x()

    def _warm_basis(self, keys, warm):
        pos = {k: j for j, k in enumerate(keys)}
        chosen = [pos[k] for k in warm.basic if k in pos]
        # rows the old LP did not have enter with their slack basic
        chosen += [j for j in range(self.n, self.n + self.m) if keys[j][1] not in warm.rows]
        if len(chosen) != self.m or len(set(chosen)) != self.m:
            return None
        k = len(warm.row_order)
        if (warm.binv is not None and len(warm.basic) == k and k <= self.m
                and all(key in pos for key in warm.basic)
                and tuple(key[1] for key in keys[self.n:self.n + k]) == warm.row_order):
            # appended rows only: inverse of [[B, 0], [E, I]] is [[B^-1, 0], [-E B^-1, I]]
            binv = np.eye(self.m)
            binv[:k, :k] = warm.binv
            binv[k:, :k] = -self.M[k:, chosen[:k]] @ warm.binv
            self.binv = binv
            return chosen
        try:
            binv = np.linalg.inv(self.M[:, chosen])
        except np.linalg.LinAlgError:
            return None
        if not np.all(np.isfinite(binv)) or np.abs(binv).max() > 1e8:
            return None
        self.binv = binv
        return chosen

    def _nonbasic_values(self):
        x = np.where(self.at_upper, self.upper, self.lower)
        x = np.where(np.isfinite(x), x, 0.0)
        x[self.is_basic] = 0.0
        return x

    def _recompute_x(self):
        x = self._nonbasic_values()
        x[self.basis] = self.binv @ (self.b - self.M @ x)
        self.x = x

    def _refactor(self):
        try:
            self.binv = np.linalg.inv(self.M[:, self.basis])
        except np.linalg.LinAlgError:
            raise LpError("basis became singular") from None
        self._recompute_x()

    def run(self, max_iter):
        n_total = self.M.shape[1]
        lower, upper = self.lower, self.upper
        movable = upper > lower
        n = self.n
        A = self.M[:, :n]
        degenerate = 0
        since_refactor = 0
        for _ in range(max_iter):
            basis = self.basis
            xb = self.x[basis]
            lb, ub = lower[basis], upper[basis]
            below = xb < lb - FEAS_TOL
            above = xb > ub + FEAS_TOL
            phase1 = bool(below.any() or above.any())
            if phase1:
                cb = below.astype(float) - above.astype(float)
                c = np.zeros(n_total)
            else:
                cb = self.cost[basis]
                c = self.cost
            y = cb @ self.binv
            d = c.copy()
            d[:n] -= y @ A
            d[n:] -= y  # slack columns form an identity block
            can_up = movable & ~self.is_basic & ~self.at_upper
            can_down = movable & ~self.is_basic & self.at_upper
            score = np.where(can_up & (d > OPT_TOL), d, 0.0) + np.where(can_down & (d < -OPT_TOL), -d, 0.0)
            eligible = np.nonzero(score > 0)[0]
            if not len(eligible):
                if phase1:
                    # make sure drift is not masquerading as infeasibility
                    if since_refactor:
                        self._refactor()
                        since_refactor = 0
                        continue
                    return INFEASIBLE
                if since_refactor:
                    self._refactor()
                    since_refactor = 0
                    xb = self.x[self.basis]
                    if np.any(xb < lower[self.basis] - FEAS_TOL) or np.any(xb > upper[self.basis] + FEAS_TOL):
                        continue
                return OPTIMAL
            if degenerate >= BLAND_AFTER:
                q = int(eligible[0])
            else:
                q = int(eligible[np.argmax(score[eligible])])
            direction = 1.0 if can_up[q] and d[q] > 0 else -1.0
            alpha = self.binv @ A[:, q] if q < n else self.binv[:, q - n].copy()
            delta = -direction * alpha
            t, r, leave_upper = self._ratio(xb, lb, ub, delta, degenerate >= BLAND_AFTER)
            span = upper[q] - lower[q]
            if span <= t:
                t, r = span, -1
            if not np.isfinite(t):
                raise LpError("LP relaxation appears unbounded")
            t = max(t, 0.0)
            self.x[q] += direction * t
            self.x[basis] += delta * t
            degenerate = degenerate + 1 if t <= 1e-12 else 0
            if r < 0:
                self.at_upper[q] = direction > 0
                self.x[q] = upper[q] if direction > 0 else lower[q]
                continue
            out = basis[r]
            self.is_basic[out] = False
            self.at_upper[out] = leave_upper
            self.x[out] = upper[out] if leave_upper else lower[out]
            basis[r] = q
            self.is_basic[q] = True
            self.at_upper[q] = False
            piv = alpha[r]
            row_r = self.binv[r] / piv
            alpha_r = alpha.copy()
            alpha_r[r] = 0.0
            self.binv -= np.outer(alpha_r, row_r)
            self.binv[r] = row_r
            self.pivots += 1
            since_refactor += 1
            if since_refactor >= REFACTOR_EVERY:
                self._refactor()
                since_refactor = 0
        raise LpError("simplex iteration limit reached")

    def _ratio(self, xb, lb, ub, delta, bland):
        """Step length and leaving row; stops at the first breakpoint.

        Harris two-pass rule: bounds are relaxed by ``HARRIS_TOL`` to find the
        longest admissible step, then the largest pivot among the rows
        blocking within that step leaves the basis.
        """
        m = len(xb)
        limit = np.full(m, np.inf)
        to_upper = np.zeros(m, dtype=bool)
        dec = delta < -ZERO_TOL
        inc = delta > ZERO_TOL
        with np.errstate(invalid="ignore", divide="ignore"):
            # decreasing: above-range vars stop at ub, in-range vars stop at lb
            above = dec & (xb > ub + FEAS_TOL)
            inrange = dec & ~above & (xb >= lb - FEAS_TOL) & np.isfinite(lb)
            limit[above] = (xb[above] - ub[above]) / -delta[above]
            to_upper[above] = True
            limit[inrange] = (xb[inrange] - lb[inrange]) / -delta[inrange]
            below = inc & (xb < lb - FEAS_TOL)
            inrange = inc & ~below & (xb <= ub + FEAS_TOL) & np.isfinite(ub)
            limit[below] = (lb[below] - xb[below]) / delta[below]
            limit[inrange] = (ub[inrange] - xb[inrange]) / delta[inrange]
            to_upper[inrange] = True
            # relax from the raw distance: a variable already outside its
            # bound by up to FEAS_TOL gets no extra allowance
            relaxed = np.maximum(limit + HARRIS_TOL / np.abs(delta), 0.0)
            limit = np.maximum(limit, 0.0)
            if not m or not np.isfinite(limit.min()):
                return np.inf, -1, False
            if bland:
                t = limit.min()
                ties = np.nonzero(limit <= t + 1e-12)[0]
                r = int(ties[np.argmin(np.asarray(self.basis)[ties])])
            else:
                t_max = relaxed.min()
                ties = np.nonzero(limit <= t_max)[0]
                r = int(ties[np.argmax(np.abs(delta[ties]))])
        return float(limit[r]), r, bool(to_upper[r])


def tableau_row(sol: LpSolution, basic_var: int) -> np.ndarray:
    """Row of ``B^-1 [A | I]`` for the row where ``basic_var`` is basic.

    Columns are the structural variables followed by one slack per row of
    ``sol.rows``.
    """
    if sol.binv is None or not sol.optimal:
        raise ValueError("tableau rows need an optimal solution")
    r = sol.basic_row(basic_var)
    return sol.binv[r] @ sol.matrix


def row_feasible(rows: Sequence[LinearInequality], x, tol: float = FEAS_TOL) -> bool:
    """Independent row-by-row feasibility re-check."""
    x = _values(x)
    return all(r.violation(x) <= tol for r in rows)


__all__ = ["FEAS_TOL", "OPT_TOL", "INT_TOL", "OPTIMAL", "INFEASIBLE", "UNBOUNDED", "LpError",
           "WarmStart", "LpSolution", "solve_lp", "tableau_row", "row_feasible", "EQ", "GE", "LE"]
