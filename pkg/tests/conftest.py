from itertools import combinations

import numpy as np
import pytest

from bnip.model import family_values
from bnip.table import CandidateFamily, ScoreTable


def full_table(p: int, palim: int | None = None, rng=None, names=None) -> ScoreTable:
    """Every parent set up to ``palim`` for every node; scores random if ``rng`` is given."""
    palim = p - 1 if palim is None else palim
    names = names or [str(i + 1) for i in range(p)]
    cands = []
    for v in range(p):
        others = [u for u in range(p) if u != v]
        fams = []
        for k in range(palim + 1):
            for ps in combinations(others, k):
                score = -float(k) if rng is None else round(float(rng.normal(-10.0, 2.0)), 6)
                fams.append(CandidateFamily(v, frozenset(ps), score))
        cands.append(fams)
    return ScoreTable(names, cands, palim)


def convex_point(st: ScoreTable, assignments: dict) -> np.ndarray:
    """Point with the given non-empty family values; empty parent sets take up the slack."""
    x = family_values(st, assignments)
    for v in range(st.p):
        x[st.family_id(v, ())] = 1.0 - x[list(st.ids(v))].sum()
    return x


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def table3():
    return full_table(3)


@pytest.fixture
def table4():
    return full_table(4)


@pytest.fixture
def y_star(table3):
    # nodes 1, 2, 3 are indices 0, 1, 2
    return convex_point(table3, {(0, (1, 2)): 0.5, (1, (0, 2)): 0.5, (2, (0, 1)): 0.5})


@pytest.fixture
def z_star(table4):
    return convex_point(table4, {(0, (2, 3)): 0.5, (1, (0, 2)): 0.5, (1, (0, 3)): 0.5,
                                 (2, (1, 3)): 0.5, (3, (0, 1)): 0.5})


# one line per acceptance criterion, echoed after the run
ACCEPTANCE: list[str] = []


def report(number: int, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {number:>2}: {detail}"
    ACCEPTANCE.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
