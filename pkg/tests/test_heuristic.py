import numpy as np
import pytest

from bnip.heuristic import SinkState, sink_find
from bnip.oracle import exhaustive_best, random_convex_point, random_interaction_table
from bnip.table import CandidateFamily, ScoreTable

from conftest import convex_point, full_table


def table_from(spec):
    """``spec[v]`` lists parent sets best first; scores just encode that order."""
    cands = [[CandidateFamily(v, frozenset(ps), -float(k)) for k, ps in enumerate(sets)]
             for v, sets in enumerate(spec)]
    return ScoreTable([str(v + 1) for v in range(len(spec))], cands)


def test_intermediate_state_after_first_sink():
    # node 2 (index 1) sits in W11, W32, W41 and W42
    st = table_from([
        [{1}, {2}, set()],
        [set(), {0}],
        [{0}, {1, 3}, set()],
        [{1, 2}, {1}, set()],
    ])
    x = np.zeros(st.n)
    x[st.family_id(1, ())] = 1.0
    for v in (0, 2, 3):
        x[st.ids(v)[0]] = 0.6
        x[st.ids(v)[-1]] = 0.4
    state = SinkState.initial(st)
    assert state.make_sink(1, st.masks, {})
    assert state.selected == [(1, st.family_id(1, ()))]
    best = {v: st.families[state.ok[v][0]].parents for v in (0, 2, 3)}
    assert best[0] == frozenset({2})  # W12 is now node 1's best
    assert best[2] == frozenset({0})  # W31 survives
    assert [st.families[i].parents for i in state.ok[3]] == [frozenset()]
    assert st.family_id(2, (1, 3)) not in state.ok[2]
    # and the full run picks node 2 first since its cost is 0
    net = sink_find(x, st)
    assert net.is_acyclic() and net.parents[1] == frozenset()


def test_identity_on_integral_points(rng):
    st = random_interaction_table(5, rng, prune=False)
    for net in exhaustive_best(st)[:200:7]:
        assert sink_find(st.vector(net), st) == net


def test_y_star_hand_simulation():
    st = full_table(3)
    st = st.with_candidates([[CandidateFamily(f.child, f.parents, {0: -5.0, 1: -3.0, 2: 0.0}[len(f.parents)])
                              for f in st.candidates(v)] for v in range(3)])
    y = convex_point(st, {(0, (1, 2)): 0.5, (1, (0, 2)): 0.5, (2, (0, 1)): 0.5})
    net = sink_find(y, st)
    # first pick: all cost 1/2, lowest node wins; then 2 -> 1 and 2 is the root
    assert net.parents == (frozenset({1, 2}), frozenset({2}), frozenset())
    assert net.score == -8.0
    assert net.score <= exhaustive_best(st, 1)[0].score


def test_always_acyclic_and_consistent(rng):
    st = random_interaction_table(6, rng)
    for _ in range(100):
        x = random_convex_point(st, rng)
        net = sink_find(x, st)
        assert net is not None and net.is_acyclic()
        assert net.score == pytest.approx(st.score_of(net))


def test_fixed_family_is_used():
    st = full_table(3)
    x = np.full(st.n, 1.0 / 4)
    want = st.family_id(0, (1, 2))
    net = sink_find(x, st, {want: 1})
    assert net.parents[0] == frozenset({1, 2})


def test_abort_when_fixed_family_is_ruled_out():
    st = full_table(2)
    fix = {st.family_id(1, (0,)): 1}
    x = np.zeros(st.n)
    x[st.family_id(0, ())] = 1.0
    x[st.family_id(1, (0,))] = 0.5
    x[st.family_id(1, ())] = 0.5
    # node 0 is cheapest, becomes the sink and so rules out the fixed 0 -> 1
    assert sink_find(x, st, fix) is None
    x[st.family_id(0, ())] = 0.9
    x[st.family_id(0, (1,))] = 0.1
    # now node 1 (only option fixed, cost 1 - 0.5) loses to node 0 (cost 0.1)
    assert sink_find(x, st, fix) is None
    x[st.family_id(1, (0,))] = 1.0
    x[st.family_id(1, ())] = 0.0
    # node 1 costs 0 and goes first; node 0 keeps its empty set
    assert sink_find(x, st, fix).parents == (frozenset(), frozenset({0}))


def test_cyclic_fixings_abort():
    st = full_table(2)
    x = np.full(st.n, 0.5)
    both = {st.family_id(1, (0,)): 1, st.family_id(0, (1,)): 1}
    assert SinkState.initial(st, both) is not None
    assert sink_find(x, st, both) is None


def test_conflicting_fixings():
    st = full_table(2)
    assert SinkState.initial(st, {st.family_id(0, ()): 1, st.family_id(0, (1,)): 1}) is None
    assert SinkState.initial(st, {st.family_id(0, ()): 0, st.family_id(0, (1,)): 0}) is None
