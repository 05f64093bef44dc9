"""Learned branching and bounding for container pre-marshalling tree search."""

__version__ = "0.1.0"

from .cpmp import (Bay, Instance, Move, Solution, apply_move, blocking_count, generate_instance,
                   is_sorted, legal_moves, read_instance, write_instance)
from .oracle import OracleResult, batch_solve, solve_exact
from .search import SearchConfig, SearchResult, dlts_dfs, dlts_lds, dlts_wbs, solve

__all__ = [
    "Bay", "Instance", "Move", "Solution", "apply_move", "blocking_count", "generate_instance",
    "is_sorted", "legal_moves", "read_instance", "write_instance",
    "OracleResult", "batch_solve", "solve_exact",
    "SearchConfig", "SearchResult", "dlts_dfs", "dlts_lds", "dlts_wbs", "solve",
]
