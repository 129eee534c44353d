import numpy as np
import pytest
from scipy.optimize import linprog

from bnip.lp import INFEASIBLE, LpError, solve_lp, tableau_row
from bnip.model import GE, LE, build_ip, cluster_inequality, packing_rows
from bnip.oracle import exhaustive_best, random_convex_point, random_interaction_table
from bnip.separation import find_cluster_cuts
from bnip.table import CandidateFamily, ScoreTable

from conftest import full_table


def highs(model, extra=(), fix=None):
    rows = list(model.rows) + list(extra)
    n = model.n
    A_ub, b_ub, A_eq, b_eq = [], [], [], []
    for r in rows:
        a = np.zeros(n)
        a[r.index] = r.values
        if r.sense == LE:
            A_ub.append(a), b_ub.append(r.rhs)
        elif r.sense == GE:
            A_ub.append(-a), b_ub.append(-r.rhs)
        else:
            A_eq.append(a), b_eq.append(r.rhs)
    bounds = [(0.0, 1.0)] * n
    for j, v in (fix or {}).items():
        bounds[j] = (v, v)
    res = linprog(-model.objective, A_ub=A_ub or None, b_ub=b_ub or None, A_eq=A_eq or None,
                  b_eq=b_eq or None, bounds=bounds, method="highs")
    return res


def test_single_forced_variable():
    st = ScoreTable(["A"], [[CandidateFamily(0, frozenset(), -0.5)]])
    sol = solve_lp(build_ip(st))
    assert sol.optimal and sol.values.tolist() == [1.0] and sol.objective == -0.5


def test_relaxation_bounds_best_dag(rng):
    st = full_table(2, rng=rng)
    sol = solve_lp(build_ip(st, set_packing=False))
    assert sol.objective >= exhaustive_best(st, 1)[0].score - 1e-9


def test_y_star_vertex():
    # mutual parenthood pays, two-parent sets pay most: the cluster polytope optimum is y*
    st = full_table(3)
    st = st.with_candidates([[CandidateFamily(f.child, f.parents, {0: -5.0, 1: -3.0, 2: 0.0}[len(f.parents)])
                              for f in st.candidates(v)] for v in range(3)])
    pairs = [cluster_inequality(c, st) for c in ([0, 1], [0, 2], [1, 2])]
    sol = solve_lp(build_ip(st, set_packing=False), pairs + [cluster_inequality([0, 1, 2], st)])
    assert sol.optimal
    full = [st.family_id(v, [u for u in range(3) if u != v]) for v in range(3)]
    assert np.allclose(sol.values[full], 0.5)
    assert sol.objective == pytest.approx(-7.5)
    assert not find_cluster_cuts(sol, st)


@pytest.mark.parametrize("seed", range(8))
def test_matches_highs(seed):
    rng = np.random.default_rng(seed)
    st = random_interaction_table(int(rng.integers(4, 7)), rng)
    model = build_ip(st, set_packing=bool(seed % 2))
    cuts = []
    for _ in range(4):
        sol = solve_lp(model, cuts)
        ref = highs(model, cuts)
        assert sol.optimal and ref.status == 0
        assert sol.objective == pytest.approx(-ref.fun, abs=1e-7)
        assert all(r.violation(sol.values) <= 1e-6 for r in sol.rows)
        new = find_cluster_cuts(sol, st, max_cuts=5)
        if not new:
            break
        cuts += [c.inequality for c in new]


def test_fixings_and_infeasibility(rng):
    st = full_table(3, rng=rng)
    model = build_ip(st)
    fix = {st.family_id(0, (1,)): 1, st.family_id(1, (0,)): 1}
    sol = solve_lp(model, fix=fix)
    assert sol.status == INFEASIBLE
    fix = {st.family_id(0, (1,)): 1}
    sol = solve_lp(model, fix=fix)
    ref = highs(model, fix=fix)
    assert sol.objective == pytest.approx(-ref.fun, abs=1e-7)
    assert sol.values[st.family_id(0, (1,))] == 1.0


def test_warm_start_agrees_with_cold(rng):
    st = random_interaction_table(6, rng)
    model = build_ip(st)
    sol = solve_lp(model)
    cuts = [c.inequality for c in find_cluster_cuts(sol, st)]
    assert cuts
    warm = solve_lp(model, cuts, warm=sol.warm)
    cold = solve_lp(model, cuts)
    assert warm.objective == pytest.approx(cold.objective, abs=1e-9)
    assert warm.pivots <= cold.pivots
    # a basis whose rows went away entirely is still usable as a start
    fixed = solve_lp(model, fix={int(np.argmax(sol.values)): 0}, warm=warm.warm)
    assert fixed.objective == pytest.approx(-highs(model, fix={int(np.argmax(sol.values)): 0}).fun, abs=1e-7)


def test_tableau_rows(rng):
    st = random_interaction_table(5, rng)
    model = build_ip(st, set_packing=False)
    sol = solve_lp(model)
    B = sol.basis_matrix()
    n = sol.n
    for col in sol.basic_cols.tolist():
        row = tableau_row(sol, col)
        assert row[col] == pytest.approx(1.0)
        assert np.abs(row[sol.basic_cols]).sum() == pytest.approx(1.0)
    # B times the full tableau reproduces [A | I]
    tab = sol.binv @ sol.matrix
    assert np.abs(B @ tab - sol.matrix).max() < 1e-7
    # at optimum, increasing a nonbasic structural at its lower bound cannot help
    c = np.concatenate([model.objective, np.zeros(len(sol.rows))])
    cb = c[sol.basic_cols]
    reduced = c - cb @ tab
    for j in range(n):
        if j in set(sol.basic_cols.tolist()):
            continue
        if sol.full[j] <= 1e-9:
            assert reduced[j] <= 1e-7
        elif sol.full[j] >= 1 - 1e-9:
            assert reduced[j] >= -1e-7
    with pytest.raises(ValueError):
        tableau_row(sol, next(j for j in range(n) if j not in set(sol.basic_cols.tolist())))


def test_identity_tableau_row():
    st = ScoreTable(["A"], [[CandidateFamily(0, frozenset(), -0.5)]])
    sol = solve_lp(build_ip(st))
    assert sol.basic_cols.tolist() == [0]
    # x0 + s = 1 with B = [1]: the row is the constraint itself
    assert tableau_row(sol, 0).tolist() == [1.0, 1.0]


def test_convexity_point_generator_matches(rng):
    st = full_table(4, 2)
    for _ in range(10):
        x = random_convex_point(st, rng)
        for v in range(4):
            assert x[list(st.ids(v))].sum() == pytest.approx(1.0)


def test_packing_rows_in_lp(rng):
    st = full_table(3, rng=rng)
    sol = solve_lp(build_ip(st))
    assert all(r.violation(sol.values) <= 1e-9 for r in packing_rows(st))


def test_iteration_guard(rng):
    st = random_interaction_table(6, rng)
    with pytest.raises(LpError):
        solve_lp(build_ip(st), max_iter=1)
