"""nfvpower optimizer package."""

from optimizer.heuristics import eenfv_no_itr, eenfv_with_itr
from optimizer.milp import build_model, decode_solution, verify_solution
from optimizer.power import baseline_power, total_power
from optimizer.radio import generate_demands, rate_chain
from optimizer.solver import exhaustive_solve, solve_model
from optimizer.topology import build_tiered_topology, default_topology, load_topology

__all__ = [
    "baseline_power",
    "build_model",
    "build_tiered_topology",
    "decode_solution",
    "default_topology",
    "eenfv_no_itr",
    "eenfv_with_itr",
    "exhaustive_solve",
    "generate_demands",
    "load_topology",
    "rate_chain",
    "solve_model",
    "total_power",
    "verify_solution",
]
