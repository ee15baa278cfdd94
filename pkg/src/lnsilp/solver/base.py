"""Request/result types shared by every sub-solver."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Protocol

from ..exceptions import ContractError
from ..ilp import Assignment, IlpInstance, check_feasibility, evaluate_objective

OPTIMAL = "optimal"
TIME_LIMIT = "time-limit-feasible"
INFEASIBLE = "infeasible"
ERROR = "error"
STATUSES = (OPTIMAL, TIME_LIMIT, INFEASIBLE, ERROR)


@dataclass
class SolveRequest:
    """One sub-solver call.

    ``time_limit`` is wall-clock seconds; ``node_limit`` is an optional
    deterministic budget (branch-and-bound nodes) for reproducible runs.
    """

    instance: IlpInstance
    warm_start: Optional[Assignment] = None
    time_limit: float = math.inf
    gap: float = 0.0
    seed: int = 0
    node_limit: Optional[int] = None

    def __post_init__(self):
        if not self.time_limit > 0:
            raise ValueError(f"time limit must be positive, got {self.time_limit}")
        if self.gap < 0:
            raise ValueError("gap target must be non-negative")
        if self.warm_start is not None:
            report = check_feasibility(self.instance, self.warm_start)
            if not report.feasible:
                names = ", ".join(v.name for v in report.violations[:5])
                raise ContractError(f"warm start is infeasible ({names})")
            if self.warm_start.objective is None:
                self.warm_start = Assignment(
                    self.warm_start.values, evaluate_objective(self.instance, self.warm_start)
                )


@dataclass
class SolveResult:
    assignment: Optional[Assignment]
    objective: float
    status: str
    wall_time: float
    nodes: int = 0
    message: str = ""
    warnings: list = field(default_factory=list)

    @property
    def has_solution(self) -> bool:
        return self.assignment is not None


class SubSolver(Protocol):
    def solve(self, request: SolveRequest) -> SolveResult: ...


def fallback_result(request: SolveRequest, status: str, wall: float, message: str, nodes=0) -> SolveResult:
    """Result that hands the warm start back unchanged."""
    ws = request.warm_start
    return SolveResult(
        assignment=ws,
        objective=ws.objective if ws is not None else math.inf,
        status=status,
        wall_time=wall,
        nodes=nodes,
        message=message,
    )
