import numpy as np
import pytest

from bnip.lp import solve_lp
from bnip.model import build_ip
from bnip.oracle import dag_vectors, random_convex_point, random_interaction_table
from bnip.separation import (SubIp, cluster_lhs, find_cluster_cuts, find_cluster_cuts_bruteforce,
                             find_convex4b_cuts, find_gomory_cuts)
from bnip.table import Network

from conftest import full_table


def vec(st, parents):
    return st.vector(Network(st.names, tuple(frozenset(p) for p in parents)))


def test_two_cycle(table3):
    x = vec(table3, [{1}, {0}, set()])
    cuts = find_cluster_cuts(x, table3)
    assert cuts[0].cluster == frozenset({0, 1}) and cuts[0].violation == 1.0
    assert [c.cluster for c in cuts] == [c.cluster for c in find_cluster_cuts_bruteforce(x, table3)]


def test_three_cycle(table3):
    x = vec(table3, [{2}, {0}, {1}])
    slow = find_cluster_cuts_bruteforce(x, table3)
    assert [c.cluster for c in slow] == [frozenset({0, 1, 2})]
    assert [c.cluster for c in find_cluster_cuts(x, table3)] == [frozenset({0, 1, 2})]


def test_y_star_passes_cluster_checks(table3, y_star):
    assert find_cluster_cuts(y_star, table3) == []
    assert find_cluster_cuts_bruteforce(y_star, table3) == []
    for c in ([0, 1], [0, 2], [1, 2]):
        assert cluster_lhs(y_star, table3, c) == 1.0


def test_empty_graph_has_no_cuts(table4):
    x = vec(table4, [set()] * 4)
    assert find_cluster_cuts_bruteforce(x, table4) == []
    assert find_convex4b_cuts(x, table4) == []


@pytest.mark.parametrize("p", [4, 5, 6])
def test_agrees_with_bruteforce(p, rng):
    st = full_table(p, min(p - 1, 3), rng)
    for _ in range(30):
        x = random_convex_point(st, rng, density=0.3)
        fast = find_cluster_cuts(x, st, max_cuts=10 ** 6)
        slow = find_cluster_cuts_bruteforce(x, st)
        assert {c.cluster for c in fast} == {c.cluster for c in slow}
        if slow:
            assert fast[0].violation == pytest.approx(slow[0].violation, abs=1e-9)


def test_sub_ip_objective_is_violation_shift(rng):
    st = full_table(5, 2, rng)
    x = random_convex_point(st, rng)
    sub, dense = SubIp(x, st), SubIp(x, st, sparse=False)
    for obj, cmask in sub.solve(cutoff=-10.0, keep=1000):
        cluster = [v for v in range(5) if cmask >> v & 1]
        assert obj + 1.0 == pytest.approx(1.0 - cluster_lhs(x, st, cluster), abs=1e-12)
        assert dense.objective(cmask) == pytest.approx(obj, abs=1e-12)


def test_cut_limit_keeps_most_violated(rng):
    st = full_table(5, 3, rng)
    for _ in range(20):
        x = random_convex_point(st, rng, density=0.4)
        slow = find_cluster_cuts_bruteforce(x, st)
        top = find_cluster_cuts(x, st, max_cuts=3)
        assert [c.violation for c in top] == pytest.approx([c.violation for c in slow[:3]], abs=1e-12)


def test_z_star_4b(table4, z_star):
    cuts = find_convex4b_cuts(z_star, table4)
    assert len(cuts) == 1
    assert cuts[0].violation == pytest.approx(0.5, abs=1e-12)
    assert cuts[0].inequality.lhs(z_star) == pytest.approx(2.5, abs=1e-12)
    assert find_cluster_cuts_bruteforce(z_star, table4) == []


def test_4b_needs_four_nodes(table3, y_star):
    assert find_convex4b_cuts(y_star, table3) == []


def test_4b_never_cuts_a_dag(table4):
    for x in dag_vectors(table4)[::7]:
        assert find_convex4b_cuts(x, table4) == []


def test_gomory_empty_on_integral_solution(rng):
    st = full_table(3, rng=rng)
    sol = solve_lp(build_ip(st))
    assert sol.is_integral()
    assert find_gomory_cuts(sol, build_ip(st)) == []


@pytest.mark.parametrize("p, set_packing", [(4, False), (5, False), (5, True)])
def test_gomory_cuts_are_valid(p, set_packing):
    # every Gomory cut must keep every DAG of the table feasible
    emitted = 0
    for seed in range(4):
        st = random_interaction_table(p, np.random.default_rng(seed), prune=False)
        model = build_ip(st, set_packing=set_packing)
        vecs = dag_vectors(st)
        cuts = []
        for _ in range(10):
            sol = solve_lp(model, cuts)
            found = find_gomory_cuts(sol, model) + find_cluster_cuts(sol, st)
            if not found:
                break
            for cut in found:
                assert cut.violation > 1e-6
                assert cut.inequality.violation(sol.values) == pytest.approx(cut.violation)
                lhs = vecs[:, cut.inequality.index] @ cut.inequality.values
                assert np.all(cut.inequality.rhs - lhs <= 1e-9), cut.source
                emitted += cut.source == "gomory"
            cuts += [c.inequality for c in found]
    assert emitted > 0
