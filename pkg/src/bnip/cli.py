"""Command line interface: ``bnip score``, ``bnip learn`` and ``bnip verify``."""
from __future__ import annotations

import argparse
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data_io import ParseError, format_score, parse_dataset, parse_scores, write_network, write_scores
from .model import InfeasibleConstraintError, apply_edge_constraints, build_ip
from .scoring import DEFAULT_ESS, DEFAULT_PALIM, score_dataset
from .solver import INFEASIBLE_STATUS, SolveParams, branch_and_cut, solve_kbest
from .table import ScoreTable

EXIT_OK, EXIT_USAGE, EXIT_PARSE, EXIT_INFEASIBLE, EXIT_VERIFY = 0, 1, 2, 3, 4

FLAGS = ("set_packing", "sink_heuristic", "propagation", "gomory", "convex4b")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    command: str
    input: str
    output: str | None = None
    palim: int = DEFAULT_PALIM
    ess: float = DEFAULT_ESS
    time_limit: float = 7200.0
    node_limit: int | None = None
    kbest: int = 1
    flags: dict = field(default_factory=lambda: {f: f != "convex4b" for f in FLAGS})
    fmt: str = "flat"
    constraints: str | None = None
    input_type: str = "auto"
    prune: bool = True
    seed: int = 0
    workers: int = 1
    trials: int = 200

    def validate(self):
        if self.palim < 0:
            raise UsageError("--palim must be non-negative")
        if not self.ess > 0:
            raise UsageError("--ess must be positive")
        if self.kbest < 1:
            raise UsageError("--kbest must be at least 1")
        if self.time_limit <= 0:
            raise UsageError("--time must be positive")
        if self.workers < 1:
            raise UsageError("--workers must be at least 1")

    def header(self) -> list[str]:
        on = ",".join(f.replace("_", "-") for f in FLAGS if self.flags[f]) or "none"
        off = ",".join(f.replace("_", "-") for f in FLAGS if not self.flags[f]) or "none"
        return [f"input {Path(self.input).name} palim {self.palim} ess {self.ess:g} "
                f"time-limit {self.time_limit:g} kbest {self.kbest}",
                f"features on {on}; off {off}"]


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bnip", description="Exact Bayesian network structure learning by branch and cut.")
    parser.add_argument("-v", "--verbose", action="store_true", help="progress and timing on stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def scoring_args(p):
        p.add_argument("--palim", type=int, default=DEFAULT_PALIM, help="maximum parent set size (default 3)")
        p.add_argument("--ess", type=float, default=DEFAULT_ESS, help="BDeu equivalent sample size (default 1)")
        p.add_argument("--no-prune", action="store_true", help="keep dominated parent sets")
        p.add_argument("--workers", type=int, default=1, help="processes used for scoring")
        p.add_argument("--input-type", choices=("auto", "data", "scores"), default="auto")

    sp = sub.add_parser("score", help="compute local scores for a dataset")
    sp.add_argument("input")
    sp.add_argument("-o", "--output", help="score file (default stdout)")
    scoring_args(sp)

    lp = sub.add_parser("learn", help="find the best network(s) for a dataset or score file")
    lp.add_argument("input")
    lp.add_argument("-o", "--output", help="network file (default stdout)")
    scoring_args(lp)
    lp.add_argument("--time", type=float, default=7200.0, help="time limit in seconds (default 7200)")
    lp.add_argument("--node-limit", type=int, default=None)
    lp.add_argument("--kbest", type=int, default=1, help="number of best networks to report")
    lp.add_argument("--format", choices=("flat", "dot"), default="flat")
    lp.add_argument("--constraints", help='file of "edge U V required|forbidden" lines')
    lp.add_argument("--no-set-packing", action="store_true")
    lp.add_argument("--no-sink-heuristic", action="store_true")
    lp.add_argument("--no-propagation", action="store_true")
    lp.add_argument("--no-gomory", action="store_true")
    lp.add_argument("--convex4b", action="store_true", help="separate 4B cuts (off by default)")

    vp = sub.add_parser("verify", help="check the solver against the exact oracles on one instance")
    vp.add_argument("input")
    scoring_args(vp)
    vp.add_argument("--seed", type=int, default=0, help="seed for the random separation trials")
    vp.add_argument("--trials", type=int, default=200)
    return parser


def config_from_args(args) -> RunConfig:
    cfg = RunConfig(args.command, args.input, getattr(args, "output", None), args.palim, args.ess,
                    input_type=args.input_type, prune=not args.no_prune, workers=args.workers)
    if args.command == "learn":
        cfg.time_limit = args.time
        cfg.node_limit = args.node_limit
        cfg.kbest = args.kbest
        cfg.fmt = args.format
        cfg.constraints = args.constraints
        cfg.flags = {"set_packing": not args.no_set_packing, "sink_heuristic": not args.no_sink_heuristic,
                     "propagation": not args.no_propagation, "gomory": not args.no_gomory,
                     "convex4b": args.convex4b}
    if args.command == "verify":
        cfg.seed = args.seed
        cfg.trials = args.trials
    cfg.validate()
    return cfg


def _read(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as e:
        raise UsageError(f"cannot read {path}: {e.strerror}") from None


def _is_score_file(text: str) -> bool:
    for line in text.splitlines():
        toks = line.split()
        if toks:
            return len(toks) == 1 and toks[0].isdigit()
    return False


def parse_constraints(text: str, st: ScoreTable) -> list[tuple[int, int, bool]]:
    out = []
    for lineno, line in enumerate(text.splitlines(), 1):
        toks = line.split("#", 1)[0].split()
        if not toks:
            continue
        if len(toks) != 4 or toks[0] != "edge" or toks[3] not in ("required", "forbidden"):
            raise ParseError(f'expected "edge U V required|forbidden" at line {lineno}', lineno)
        try:
            u, v = st.node_index(toks[1]), st.node_index(toks[2])
        except (KeyError, ValueError):
            raise ParseError(f"unknown node in constraint at line {lineno}", lineno) from None
        if u == v:
            raise ParseError(f"self edge in constraint at line {lineno}", lineno)
        out.append((u, v, toks[3] == "required"))
    return out


def load_table(cfg: RunConfig, prune: bool | None = None) -> ScoreTable:
    text = _read(cfg.input)
    kind = cfg.input_type
    if kind == "auto":
        kind = "scores" if _is_score_file(text) else "data"
    if kind == "scores":
        return parse_scores(text)
    data = parse_dataset(text)
    if data.p == 0:
        raise ParseError("dataset has no variables")
    return score_dataset(data, cfg.palim, cfg.ess, cfg.prune if prune is None else prune, cfg.workers)


def _emit(cfg: RunConfig, text: str, out) -> None:
    if cfg.output:
        Path(cfg.output).write_text(text)
    else:
        out.write(text)


def cmd_score(cfg: RunConfig, out) -> int:
    cfg.input_type = "data"
    _emit(cfg, write_scores(load_table(cfg)), out)
    return EXIT_OK


def cmd_learn(cfg: RunConfig, out, err) -> int:
    constraint_text = _read(cfg.constraints) if cfg.constraints else None
    # dominance pruning is unsafe once structure is constrained
    st = load_table(cfg, prune=False if constraint_text is not None else None)
    header = cfg.header()
    rows = []
    if constraint_text is not None:
        cons = parse_constraints(constraint_text, st)
        header += [f"constraint edge {st.names[u]} {st.names[v]} {'required' if req else 'forbidden'}"
                   for u, v, req in cons]
        st, rows = apply_edge_constraints(st, cons)
    model = build_ip(st, set_packing=cfg.flags["set_packing"], extra_rows=rows)
    params = SolveParams(time_limit=cfg.time_limit, node_limit=cfg.node_limit,
                         sink_heuristic=cfg.flags["sink_heuristic"], propagation=cfg.flags["propagation"],
                         gomory=cfg.flags["gomory"], convex4b=cfg.flags["convex4b"])
    start = time.monotonic()
    results = solve_kbest(model, cfg.kbest, params) if cfg.kbest > 1 else [branch_and_cut(model, params)]
    elapsed = time.monotonic() - start
    if not results or results[0].best is None:
        status = results[0].status if results else INFEASIBLE_STATUS
        err.write(f"bnip: no acyclic network satisfies the model ({status})\n")
        return EXIT_INFEASIBLE if status == INFEASIBLE_STATUS else EXIT_OK
    parts = []
    for rank, res in enumerate(results, 1):
        summary = (f"rank {rank} score {format_score(res.best_score)} gap {res.gap:.6g} "
                   f"nodes {res.stats.get('nodes', 0)} status {res.status}")
        parts.append(write_network(res.best, cfg.fmt, st, header + [summary]))
    _emit(cfg, "\n".join(parts), out)
    err.write(f"bnip: solved in {elapsed:.2f}s\n")
    return EXIT_OK


def _violations(row, vecs: np.ndarray) -> np.ndarray:
    lhs = vecs[:, row.index] @ row.values
    if row.sense == "<=":
        return lhs - row.rhs
    if row.sense == ">=":
        return row.rhs - lhs
    return np.abs(lhs - row.rhs)


def cmd_verify(cfg: RunConfig, out) -> int:
    from . import oracle
    from .separation import find_cluster_cuts, find_cluster_cuts_bruteforce

    st = load_table(cfg)
    checks: list[tuple[str, bool, str]] = []
    dp = oracle.dp_best(st) if st.p <= 20 else None
    res = branch_and_cut(build_ip(st), SolveParams(audit=st.p <= 5))
    if dp is not None:
        ok = res.status == "optimal" and abs(res.best_score - dp.score) <= 1e-6
        checks.append(("solver-matches-dp", ok, f"solver {format_score(res.best_score)} dp {format_score(dp.score)}"))
    if st.p <= 5:
        ranked = oracle.exhaustive_best(st, limit=1)
        ok = abs(ranked[0].score - dp.score) <= 1e-9
        checks.append(("dp-matches-exhaustive", ok, f"exhaustive {format_score(ranked[0].score)}"))
        dags = oracle.enumerate_dags(st.p, st.names)
        ok = len(dags) == oracle.count_dags(st.p)
        checks.append(("dag-count", ok, f"{len(dags)} labelled DAGs"))
        vecs = oracle.dag_vectors(st, dags)
        bad = sum(1 for c in res.cuts if len(vecs) and np.any(_violations(c.inequality, vecs) > 1e-9))
        checks.append(("cut-validity", bad == 0, f"{len(res.cuts)} cuts, {bad} invalid"))
    if st.p <= 12:
        rng = np.random.default_rng(cfg.seed)
        bad = 0
        for _ in range(cfg.trials):
            x = oracle.random_convex_point(st, rng, 0.3)
            fast = find_cluster_cuts(x, st, max_cuts=1)
            slow = find_cluster_cuts_bruteforce(x, st)
            top_fast = fast[0].violation if fast else 0.0
            top_slow = slow[0].violation if slow else 0.0
            bad += bool(fast) != bool(slow) or abs(top_fast - top_slow) > 1e-9
        checks.append(("separation-complete", bad == 0, f"{cfg.trials} random points, {bad} disagreements"))
    if res.best is not None:
        checks.append(("network-acyclic", res.best.is_acyclic(), "topological sort of the solver network"))
    for name, ok, detail in checks:
        out.write(f"{'PASS' if ok else 'FAIL'} {name}: {detail}\n")
    return EXIT_OK if all(ok for _, ok, _ in checks) else EXIT_VERIFY


def run(cfg: RunConfig, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        if cfg.command == "score":
            return cmd_score(cfg, out)
        if cfg.command == "learn":
            return cmd_learn(cfg, out, err)
        return cmd_verify(cfg, out)
    except UsageError as e:
        err.write(f"bnip: {e}\n")
        return EXIT_USAGE
    except ParseError as e:
        err.write(f"bnip: parse error: {e}\n")
        return EXIT_PARSE
    except InfeasibleConstraintError as e:
        err.write(f"bnip: infeasible: {e}\n")
        return EXIT_INFEASIBLE


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s", stream=sys.stderr)
    try:
        cfg = config_from_args(args)
    except UsageError as e:
        sys.stderr.write(f"bnip: {e}\n")
        return EXIT_USAGE
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
