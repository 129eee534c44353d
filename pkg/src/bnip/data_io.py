"""Reading datasets and local score files, writing networks.

Dataset format (whitespace separated)::

    A B C        <- node names
    2 3 2        <- arities
    0 2 1        <- one observation per line, 0-based category indices
    ...

Score file format::

    3            <- number of nodes
    A 2          <- node name, number of candidate parent sets
    -10.5 0      <- score, parent count, parent names...
    -9.25 1 B
    ...
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, TextIO

import numpy as np

from .table import CandidateFamily, Network, ScoreTable, set_key


class ParseError(ValueError):
    """Malformed input file. ``line`` is 1-based, or None if not applicable."""

    def __init__(self, msg: str, line: int | None = None):
        super().__init__(msg)
        self.line = line


@dataclass(frozen=True)
class Dataset:
    names: tuple
    arities: tuple
    rows: np.ndarray  # N x p, integer category indices

    def __post_init__(self):
        if len(self.names) < 1:
            raise ValueError("a dataset needs at least one variable")
        if len(set(self.names)) != len(self.names):
            raise ValueError("variable names must be unique")
        if len(self.arities) != len(self.names):
            raise ValueError("one arity per variable required")
        if any(r < 1 for r in self.arities):
            raise ValueError("arities must be positive")
        rows = self.rows
        if rows.ndim != 2 or rows.shape[1] != len(self.names):
            raise ValueError("rows must be an N x p matrix")
        if rows.size and ((rows < 0).any() or (rows >= np.asarray(self.arities)).any()):
            raise ValueError("data value out of range for its arity")

    @property
    def p(self) -> int:
        return len(self.names)

    @property
    def N(self) -> int:
        return self.rows.shape[0]


def _text(src: str | TextIO) -> str:
    return src if isinstance(src, str) else src.read()


def _int(tok: str, lineno: int, what: str) -> int:
    try:
        return int(tok)
    except ValueError:
        raise ParseError(f"malformed integer {tok!r} ({what}) at line {lineno}", lineno) from None


def parse_dataset(src: str | TextIO) -> Dataset:
    """Parse a dataset: names line, arities line, then one observation per line."""
    lines = [(i + 1, ln.split()) for i, ln in enumerate(_text(src).splitlines())]
    lines = [(i, toks) for i, toks in lines if toks]
    if len(lines) < 2:
        raise ParseError("dataset needs a names line and an arities line")
    (_, names), (aline, atoks) = lines[0], lines[1]
    if len(set(names)) != len(names):
        dup = next(n for n in names if names.count(n) > 1)
        raise ParseError(f"duplicate variable name {dup!r} at line {lines[0][0]}", lines[0][0])
    p = len(names)
    if len(atoks) != p:
        raise ParseError(f"expected {p} arities, found {len(atoks)} at line {aline}", aline)
    arities = [_int(t, aline, "arity") for t in atoks]
    for r in arities:
        if r < 1:
            raise ParseError(f"arity {r} must be positive at line {aline}", aline)
    rows = np.empty((len(lines) - 2, p), dtype=np.int64)
    for k, (lineno, toks) in enumerate(lines[2:]):
        if len(toks) != p:
            raise ParseError(f"ragged row: expected {p} entries, found {len(toks)} at line {lineno}", lineno)
        for j, t in enumerate(toks):
            val = _int(t, lineno, "data value")
            if val < 0 or val >= arities[j]:
                raise ParseError(f"entry {val} ≥ arity {arities[j]} at line {lineno}"
                                 if val >= 0 else f"negative entry {val} at line {lineno}", lineno)
            rows[k, j] = val
    return Dataset(tuple(names), tuple(arities), rows)


def write_dataset(data: Dataset) -> str:
    out = [" ".join(data.names), " ".join(map(str, data.arities))]
    out += [" ".join(map(str, row)) for row in data.rows.tolist()]
    return "\n".join(out) + "\n"


def parse_scores(src: str | TextIO) -> ScoreTable:
    """Parse a local score file into an (unpruned) :class:`ScoreTable`."""
    lines = [(i + 1, ln.split()) for i, ln in enumerate(_text(src).splitlines())]
    lines = [(i, toks) for i, toks in lines if toks]
    if not lines:
        raise ParseError("empty score file")
    lineno, toks = lines[0]
    if len(toks) != 1:
        raise ParseError(f"first line must hold the node count, at line {lineno}", lineno)
    p = _int(toks[0], lineno, "node count")
    # first pass: node headers, so parents may be named before their own block
    blocks = []
    pos = 1
    for _ in range(p):
        if pos >= len(lines):
            raise ParseError(f"expected {p} nodes, found {len(blocks)}")
        lineno, toks = lines[pos]
        if len(toks) != 2:
            raise ParseError(f"expected 'name count' header at line {lineno}", lineno)
        name, k = toks[0], _int(toks[1], lineno, "candidate count")
        body = []
        pos += 1
        while pos < len(lines) and len(body) < k:
            if _looks_like_header(lines[pos][1]):
                break
            body.append(lines[pos])
            pos += 1
        if len(body) != k:
            raise ParseError(f"expected {k} candidates for {name}, found {len(body)}", lineno)
        blocks.append((lineno, name, body))
    if pos != len(lines):
        raise ParseError(f"trailing content at line {lines[pos][0]}", lines[pos][0])
    names = [b[1] for b in blocks]
    if len(set(names)) != len(names):
        dup = next(n for n in names if names.count(n) > 1)
        raise ParseError(f"duplicate node name {dup!r}")
    index = {n: i for i, n in enumerate(names)}
    candidates = []
    for v, (_, name, body) in enumerate(blocks):
        seen = set()
        cands = []
        for lineno, toks in body:
            try:
                score = float(toks[0])
            except ValueError:
                raise ParseError(f"malformed score {toks[0]!r} at line {lineno}", lineno) from None
            if not np.isfinite(score):
                raise ParseError(f"non-finite score at line {lineno}", lineno)
            if len(toks) < 2:
                raise ParseError(f"missing parent count at line {lineno}", lineno)
            m = _int(toks[1], lineno, "parent count")
            pnames = toks[2:]
            if len(pnames) != m:
                raise ParseError(f"expected {m} parents, found {len(pnames)} at line {lineno}", lineno)
            if len(set(pnames)) != len(pnames):
                raise ParseError(f"duplicate parent in set at line {lineno}", lineno)
            ps = []
            for pn in pnames:
                if pn not in index:
                    raise ParseError(f"unknown parent {pn!r} at line {lineno}", lineno)
                if pn == name:
                    raise ParseError(f"node {name} listed as its own parent at line {lineno}", lineno)
                ps.append(index[pn])
            ps = frozenset(ps)
            if ps in seen:
                raise ParseError(f"duplicate parent set for {name} at line {lineno}", lineno)
            seen.add(ps)
            cands.append(CandidateFamily(v, ps, score))
        candidates.append(cands)
    try:
        return ScoreTable(names, candidates)
    except ValueError as e:
        raise ParseError(str(e)) from None


def _looks_like_header(toks: list[str]) -> bool:
    # a two-token score line is "score 0"; anything else with two tokens is "name count"
    if len(toks) != 2:
        return False
    try:
        float(toks[0])
    except ValueError:
        return True
    return toks[1] != "0"


def format_score(score: float) -> str:
    """At least six decimals, but never lose precision on a round trip."""
    s = f"{score:.6f}"
    return s if float(s) == score else repr(float(score))


def write_scores(table: ScoreTable) -> str:
    out = [str(table.p)]
    for v, name in enumerate(table.names):
        cands = table.candidates(v)
        out.append(f"{name} {len(cands)}")
        for c in cands:
            pnames = [table.names[u] for u in set_key(c.parents)]
            out.append(" ".join([format_score(c.score), str(len(pnames))] + pnames))
    return "\n".join(out) + "\n"


def write_network(net: Network, fmt: str = "flat", table: ScoreTable | None = None,
                  header: Iterable[str] = ()) -> str:
    """Serialize a network.

    ``flat`` writes one ``child <- {parents} score`` line per node followed by a
    total line; per-family scores are only known when ``table`` is given.
    ``dot`` writes a digraph with one edge per (parent, child) pair. ``header``
    lines are emitted as comments.
    """
    names = net.names
    if fmt == "flat":
        out = [f"# {h}" for h in header]
        for v, ps in enumerate(net.parents):
            line = f"{names[v]} <- {{{','.join(names[u] for u in set_key(ps))}}}"
            if table is not None:
                fid = table.family_id(v, ps)
                if fid is not None:
                    line += f" {format_score(table.families[fid].score)}"
            out.append(line)
        out.append(f"total score: {format_score(net.score)}")
        return "\n".join(out) + "\n"
    if fmt == "dot":
        out = [f"// {h}" for h in header]
        out.append("digraph network {")
        out.append(f'  label="score {format_score(net.score)}";')
        for name in names:
            out.append(f'  "{name}";')
        for u, v in net.edges():
            out.append(f'  "{names[u]}" -> "{names[v]}";')
        out.append("}")
        return "\n".join(out) + "\n"
    raise ValueError(f"unknown network format {fmt!r}")
