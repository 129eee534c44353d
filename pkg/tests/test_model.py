from collections import defaultdict
from itertools import combinations

import numpy as np
import pytest

from bnip.model import (InfeasibleConstraintError, apply_edge_constraints, build_ip,
                        characteristic_imset, characteristic_imset_entry, chvatal2_inequality,
                        cluster_inequality, convex4b_inequality, edge_constraint, exclusion_constraint,
                        forbid_edge, knapsack_form, packing_rows, require_edge, set_packing_inequality)
from bnip.oracle import dag_vectors, enumerate_dags, exhaustive_best, random_convex_point
from bnip.table import CandidateFamily, Network, ScoreTable

from conftest import convex_point, full_table


def vec(st, parents):
    return st.vector(Network(st.names, tuple(frozenset(p) for p in parents)))


def clusters(p, lo=2):
    for k in range(lo, p + 1):
        yield from combinations(range(p), k)


def all_rows(st):
    p = st.p
    rows = [cluster_inequality(c, st) for c in clusters(p)]
    rows += [r for r in (knapsack_form(c, st) for c in clusters(p)) if r]
    rows += [r for r in (set_packing_inequality(c, st) for c in clusters(p)) if r]
    if p >= 4:
        for quad in combinations(range(p), 4):
            for a in quad:
                rows.append(chvatal2_inequality(a, [u for u in quad if u != a], st))
            for mid in combinations(quad, 2):
                ends = [u for u in quad if u not in mid]
                rows.append(convex4b_inequality(ends[0], *mid, ends[1], st))
    return rows


def test_build_ip_single_node():
    st = ScoreTable(["A"], [[CandidateFamily(0, frozenset(), -0.5)]])
    model = build_ip(st)
    assert model.count("convexity") == 1 and model.count("packing") == 0


def test_two_cycle_packing_row():
    st = full_table(2)
    (row,) = packing_rows(st)
    assert {v for v, _ in row.coeffs} == {st.family_id(0, (1,)), st.family_id(1, (0,))}
    assert row.sense == "<=" and row.rhs == 1.0


def test_packing_count_full_p4(table4):
    expect = 0
    for c in clusters(4):
        terms = sum(1 for f in table4.families
                    if f.child in c and set(c) - {f.child} <= f.parents)
        expect += terms >= 2
    model = build_ip(table4)
    assert model.count("packing") == expect
    assert build_ip(table4, set_packing=False).count("packing") == 0


def test_cluster_row_terms(table3):
    row = cluster_inequality([0, 1], table3)
    got = {(table3.families[v].child, table3.families[v].parents) for v, _ in row.coeffs}
    assert got == {(0, frozenset()), (0, frozenset({2})), (1, frozenset()), (1, frozenset({2}))}
    assert row.sense == ">=" and row.rhs == 1.0


def test_two_cycle_violates_cluster_and_knapsack(table3):
    x = vec(table3, [{1}, {0}, set()])
    assert cluster_inequality([0, 1], table3).lhs(x) == 0.0
    assert knapsack_form([0, 1], table3).lhs(x) == 2.0
    empty = vec(table3, [set(), set(), set()])
    assert knapsack_form([0, 1], table3).lhs(empty) == 0.0


@pytest.mark.parametrize("p", [3, 4])
def test_validity_audit(p):
    st = full_table(p)
    vecs = dag_vectors(st)
    assert len(vecs) == {3: 25, 4: 543}[p]
    for row in all_rows(st):
        assert all(row.satisfied(x) for x in vecs), str(row)


def test_y_star_and_eq11(table3, y_star):
    row = set_packing_inequality([0, 1, 2], table3)
    names = {(table3.families[v].child, table3.families[v].parents) for v, _ in row.coeffs}
    assert names == {(0, frozenset({1, 2})), (1, frozenset({0, 2})), (2, frozenset({0, 1}))}
    assert row.lhs(y_star) == 1.5
    on_plane = [x for x in dag_vectors(table3) if row.lhs(x) == 1.0]
    assert len(on_plane) == 9


def test_z_star(table4, z_star):
    row = convex4b_inequality(0, 1, 2, 3, table4)
    assert row.lhs(z_star) == 2.5
    assert row.lhs(vec(table4, [set()] * 4)) == 0.0
    for c in clusters(4):
        assert cluster_inequality(c, table4).satisfied(z_star, 1e-12)
        packing = set_packing_inequality(c, table4)
        assert packing.satisfied(z_star, 1e-12)


def test_chvatal2_examples(table4):
    row = chvatal2_inequality(0, (1, 2, 3), table4)
    assert row.lhs(vec(table4, [set()] * 4)) == 5.0
    assert row.lhs(vec(table4, [set(), {0}, {0}, {0}])) == 2.0
    # a takes no parents, b, c, d take a as their only parent: 2*1 + 0
    assert row.lhs(vec(table4, [set(), {2}, {3}, set()])) == 5.0


def test_eq4_eq5_equivalence(rng):
    st = full_table(5, 3)
    for _ in range(50):
        x = random_convex_point(st, rng)
        for c in clusters(5):
            e4 = cluster_inequality(c, st)
            e5 = knapsack_form(c, st)
            assert e4.violation(x) == pytest.approx(e5.violation(x), abs=1e-12)


def test_imset_entries():
    empty = Network(("1", "2", "3"), (frozenset(),) * 3)
    assert all(characteristic_imset_entry(empty, c) == 0 for c in clusters(3))
    v = Network(("1", "2", "3"), (frozenset(), frozenset(), frozenset({0, 1})))
    assert characteristic_imset_entry(v, {0, 1, 2}) == 1
    ab = Network(("1", "2"), (frozenset(), frozenset({0})))
    ba = Network(("1", "2"), (frozenset({1}), frozenset()))
    assert characteristic_imset_entry(ab, {0, 1}) == characteristic_imset_entry(ba, {0, 1}) == 1


def markov_key(net):
    skeleton = frozenset(frozenset((u, v)) for u, v in net.edges())
    vees = frozenset((frozenset((a, b)), v) for v, ps in enumerate(net.parents)
                     for a, b in combinations(sorted(ps), 2) if frozenset((a, b)) not in skeleton)
    return skeleton, vees


def test_imset_classes_are_markov_classes():
    groups = defaultdict(list)
    for net in enumerate_dags(3):
        entries = tuple(characteristic_imset_entry(net, c) for c in clusters(3))
        assert set(entries) <= {0, 1}
        groups[entries].append(net)
        assert {k for k, val in characteristic_imset(net).items() if val} == \
               {frozenset(c) for c, e in zip(clusters(3), entries) if e}
    assert len(groups) == 11
    for nets in groups.values():
        assert len({markov_key(n) for n in nets}) == 1


def test_forbid_edge_keeps_empty():
    st = ScoreTable(["u", "v"], [[CandidateFamily(0, frozenset(), -1.0)],
                                 [CandidateFamily(1, frozenset({0}), -0.5), CandidateFamily(1, frozenset(), -1.0)]])
    reduced = edge_constraint(0, 1, False, st)
    assert [c.parents for c in reduced.candidates(1)] == [frozenset()]
    only = ScoreTable(["u", "v"], [[CandidateFamily(0, frozenset(), -1.0)],
                                   [CandidateFamily(1, frozenset({0}), -0.5)]])
    with pytest.raises(InfeasibleConstraintError):
        forbid_edge(0, 1, only)


def test_required_edge_matches_filtered_oracle(rng):
    st = full_table(3, rng=rng)
    row = require_edge(2, 0, st)
    want = max(n.score for n in exhaustive_best(st) if 2 in n.parents[0])
    got = max(n.score for n in exhaustive_best(st) if row.satisfied(st.vector(n)))
    assert got == want


def test_required_and_forbidden_clash(table3):
    with pytest.raises(InfeasibleConstraintError):
        apply_edge_constraints(table3, [(0, 1, True), (0, 1, False)])


def test_exclusion_row(rng):
    st = full_table(3, rng=rng)
    ranked = exhaustive_best(st)
    row = exclusion_constraint(ranked[0], st)
    assert row.lhs(st.vector(ranked[0])) == 3.0 and not row.satisfied(st.vector(ranked[0]))
    assert all(row.satisfied(st.vector(n)) for n in ranked[1:])
    model = build_ip(st, extra_rows=[row])
    assert not model.admits(ranked[0]) and model.admits(ranked[1])


def test_row_helpers():
    st = full_table(3)
    row = cluster_inequality([0, 1, 2], st)
    assert "[cluster]" in str(row)
    assert row.index.dtype.kind == "i" and np.all(row.values == 1.0)
    with pytest.raises(ValueError):
        cluster_inequality([1], st)
    with pytest.raises(ValueError):
        convex4b_inequality(0, 1, 1, 2, full_table(4))
