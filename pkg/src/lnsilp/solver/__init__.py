"""Sub-solvers: built-in branch-and-bound and the external-solver adapter."""

from .base import ERROR, INFEASIBLE, OPTIMAL, TIME_LIMIT, SolveRequest, SolveResult, SubSolver
from .bnb import BranchAndBound, solve_lp_relaxation, solve_milp
from .simplex import LPResult, solve_lp
from .adapter import ExternalAdapter


def make_solver(spec: str = "builtin"):
    """``builtin`` or ``adapter:<config.json>``."""
    if spec == "builtin":
        return BranchAndBound()
    if spec.startswith("adapter:"):
        return ExternalAdapter.from_config(spec.split(":", 1)[1])
    from ..exceptions import ConfigurationError

    raise ConfigurationError(f"unknown solver {spec!r}; use 'builtin' or 'adapter:<config>'")


__all__ = [
    "BranchAndBound",
    "ERROR",
    "ExternalAdapter",
    "INFEASIBLE",
    "LPResult",
    "OPTIMAL",
    "SolveRequest",
    "SolveResult",
    "SubSolver",
    "TIME_LIMIT",
    "make_solver",
    "solve_lp",
    "solve_lp_relaxation",
    "solve_milp",
]
