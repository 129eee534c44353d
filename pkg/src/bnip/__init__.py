"""Exact Bayesian network structure learning with an integer programming branch and cut."""
from .data_io import Dataset, ParseError, parse_dataset, parse_scores, write_network, write_scores
from .model import IpModel, LinearInequality, build_ip
from .scoring import bdeu_local_score, score_dataset
from .solver import SolveParams, SolveResult, branch_and_cut, solve_kbest
from .table import CandidateFamily, Network, ScoreTable

__version__ = "0.1.0"

__all__ = ["Dataset", "ParseError", "parse_dataset", "parse_scores", "write_network", "write_scores",
           "IpModel", "LinearInequality", "build_ip", "bdeu_local_score", "score_dataset",
           "SolveParams", "SolveResult", "branch_and_cut", "solve_kbest",
           "CandidateFamily", "Network", "ScoreTable"]
