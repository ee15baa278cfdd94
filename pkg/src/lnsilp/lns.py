"""Decomposition-based large neighborhood search.

A decomposition partitions the decomposable variables into ``k`` subsets.
One LNS pass visits the subsets in order: every decomposable variable outside
the current subset is fixed to its incumbent value and the resulting sub-ILP is
re-optimized with the incumbent as warm start.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Optional, Protocol, Sequence

import numpy as np

from .exceptions import ContractError
from .ilp import (
    Assignment,
    IlpInstance,
    check_feasibility,
    evaluate_objective,
    restricted_instance,
)
from .solver.base import ERROR, OPTIMAL, TIME_LIMIT, SolveRequest, SolveResult
from .solver.bnb import BranchAndBound

logger = logging.getLogger(__name__)


@dataclass
class Decomposition:
    """Subset label per decomposable variable (in ascending variable-id order)."""

    labels: np.ndarray
    k: int
    origin: str = "random"

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=int)
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.k):
            raise ValueError("labels must lie in 0..k-1")

    def subsets(self, instance: IlpInstance) -> list[np.ndarray]:
        ids = instance.decomposable_ids
        if ids.size != self.labels.size:
            raise ValueError(
                f"decomposition covers {self.labels.size} variables, instance has {ids.size} decomposable"
            )
        return [ids[self.labels == i] for i in range(self.k)]

    @classmethod
    def from_subsets(cls, instance: IlpInstance, subsets: Sequence, origin: str = "random"):
        ids = instance.decomposable_ids
        pos = {int(v): i for i, v in enumerate(ids)}
        labels = np.full(ids.size, -1, dtype=int)
        for s, members in enumerate(subsets):
            for v in members:
                if labels[pos[int(v)]] != -1:
                    raise ValueError(f"variable {v} appears in two subsets")
                labels[pos[int(v)]] = s
        if (labels < 0).any():
            raise ValueError("subsets must cover every decomposable variable")
        return cls(labels, len(subsets), origin)

    def __eq__(self, other):
        if not isinstance(other, Decomposition):
            return NotImplemented
        return self.k == other.k and np.array_equal(self.labels, other.labels)


def random_decomposition(instance: IlpInstance, k: int, rng: np.random.Generator) -> Decomposition:
    """Shuffle the decomposable ids and cut them into ``k`` near-equal chunks."""
    ids = instance.decomposable_ids
    if not 1 <= k <= ids.size:
        raise ValueError(f"k={k} outside 1..{ids.size}")
    perm = rng.permutation(ids.size)
    labels = np.empty(ids.size, dtype=int)
    for s, chunk in enumerate(np.array_split(perm, k)):
        labels[chunk] = s
    return Decomposition(labels, k, "random")


@dataclass
class SolverParams:
    """How each sub-ILP is solved: the solver object plus its budget."""

    time_limit: float = 1.0
    gap: float = 0.0
    seed: int = 0
    node_limit: Optional[int] = None
    solver: object = field(default_factory=BranchAndBound)
    # (iteration, subset) -> node budget replacing the clock for that step;
    # used to replay runs whose sub-solves stopped on the time limit
    step_budgets: Optional[dict] = None

    def request(self, instance, warm_start) -> SolveRequest:
        return SolveRequest(
            instance=instance,
            warm_start=warm_start,
            time_limit=self.time_limit,
            gap=self.gap,
            seed=self.seed,
            node_limit=self.node_limit,
        )

    def for_step(self, iteration: int, subset: int) -> "SolverParams":
        if not self.step_budgets or (iteration, subset) not in self.step_budgets:
            return self
        return replace(self, time_limit=math.inf, node_limit=int(self.step_budgets[(iteration, subset)]),
                       step_budgets=None)


@dataclass
class StepRecord:
    iteration: int
    subset: int
    t_step_s: float
    t_cum_s: float
    obj_before: float
    obj_after: float
    status: str
    nodes: int = 0


@dataclass
class LnsTrace:
    steps: list = field(default_factory=list)
    t_cum_s: float = 0.0
    # objective after each completed iteration, index 0 is the start
    iteration_objectives: list = field(default_factory=list)
    iteration_times: list = field(default_factory=list)
    decompositions: list = field(default_factory=list)
    states: Optional[list] = None  # assignment after every step when kept

    def improvement(self) -> float:
        return math.fsum(s.obj_before - s.obj_after for s in self.steps)

    def limited_steps(self) -> dict:
        """Node counts of the steps that stopped on the clock, keyed by (iteration, subset)."""
        return {(s.iteration, s.subset): s.nodes for s in self.steps if s.status == TIME_LIMIT}

    def to_csv(self, path, instance: str, method: str, append: bool = False) -> None:
        write_trace_csv(path, [(instance, method, self)], append=append)


TRACE_COLUMNS = [
    "instance", "method", "iteration", "subset", "t_step_s", "t_cum_s",
    "obj_before", "obj_after", "status",
]


def write_trace_csv(path, runs, append: bool = False) -> None:
    mode = "a" if append else "w"
    with open(path, mode, newline="") as fh:
        w = csv.writer(fh)
        if not append:
            w.writerow(TRACE_COLUMNS)
        for instance, method, trace in runs:
            for s in trace.steps:
                w.writerow([instance, method, s.iteration, s.subset, repr(s.t_step_s), repr(s.t_cum_s),
                            repr(s.obj_before), repr(s.obj_after), s.status])


def fix_and_optimize(
    instance: IlpInstance,
    incumbent: Assignment,
    subset,
    params: Optional[SolverParams] = None,
    check_incumbent: bool = True,
) -> tuple[Assignment, SolveResult]:
    """Re-optimize the variables in ``subset`` with every other decomposable variable fixed.

    The returned assignment is never worse than ``incumbent`` and agrees with
    it exactly outside ``subset`` (auxiliary non-decomposable variables may move).
    """
    params = params or SolverParams()
    subset = np.asarray(list(subset), dtype=int)
    if subset.size and not np.isin(subset, instance.decomposable_ids).all():
        raise ValueError("subset must contain decomposable variables only")
    if check_incumbent:
        report = check_feasibility(instance, incumbent)
        if not report.feasible:
            raise ContractError(
                "incumbent is infeasible: " + ", ".join(v.name for v in report.violations[:5])
            )
    if incumbent.objective is None:
        incumbent = Assignment(incumbent.values, evaluate_objective(instance, incumbent))
    sub = restricted_instance(instance, incumbent, subset)
    result = params.solver.solve(params.request(sub, incumbent))
    new = result.assignment
    if new is None or result.status == ERROR:
        return incumbent, result
    fixed = np.ones(instance.n_vars, dtype=bool)
    fixed[subset] = False
    fixed[~np.isin(np.arange(instance.n_vars), instance.decomposable_ids)] = False
    new_obj = evaluate_objective(instance, new)
    if (
        not np.array_equal(new.values[fixed], incumbent.values[fixed])
        or new_obj > incumbent.objective
        or not check_feasibility(instance, new).feasible
    ):
        logger.warning("sub-solver broke the fix-and-optimize contract; keeping incumbent")
        result.warnings.append("contract violation; incumbent kept")
        return incumbent, result
    return Assignment(new.values, new_obj), result


def run_decomposition_lns(
    instance: IlpInstance,
    incumbent: Assignment,
    decomposition: Decomposition,
    params: Optional[SolverParams] = None,
    trace: Optional[LnsTrace] = None,
    iteration: int = 0,
) -> Assignment:
    """One pass over the subsets of ``decomposition`` in ascending order."""
    params = params or SolverParams()
    trace = trace if trace is not None else LnsTrace()
    report = check_feasibility(instance, incumbent)
    if not report.feasible:
        raise ContractError("initial incumbent is infeasible")
    if incumbent.objective is None:
        incumbent = Assignment(incumbent.values, evaluate_objective(instance, incumbent))
    for s, subset in enumerate(decomposition.subsets(instance)):
        before = incumbent.objective
        t0 = time.monotonic()
        if subset.size == 0 and instance.decomposable_ids.size == instance.n_vars:
            status = OPTIMAL
            nodes = 0
        else:
            incumbent, res = fix_and_optimize(
                instance, incumbent, subset, params.for_step(iteration, s), check_incumbent=False
            )
            status = res.status
            nodes = res.nodes
        dt = time.monotonic() - t0
        trace.t_cum_s += dt
        trace.steps.append(
            StepRecord(iteration, s, dt, trace.t_cum_s, before, incumbent.objective, status, nodes)
        )
        if trace.states is not None:
            trace.states.append(incumbent)
    return incumbent


class DecompositionSource(Protocol):
    def decompose(self, instance: IlpInstance, incumbent: Assignment, iteration: int) -> Decomposition: ...


class RandomSource:
    def __init__(self, k: int, rng: np.random.Generator):
        self.k = k
        self.rng = rng

    def decompose(self, instance, incumbent, iteration):
        return random_decomposition(instance, self.k, self.rng)


class ReplaySource:
    def __init__(self, decompositions: Sequence[Decomposition]):
        self.decompositions = list(decompositions)

    def decompose(self, instance, incumbent, iteration):
        return self.decompositions[iteration]


def run_lns_iterations(
    instance: IlpInstance,
    initial: Assignment,
    source,
    T: int,
    params: Optional[SolverParams] = None,
    keep_states: bool = False,
) -> tuple[Assignment, LnsTrace]:
    """``T`` LNS iterations, each with a fresh decomposition from ``source``.

    The source sees the current incumbent, so learned policies re-featurize
    every iteration.  Decomposition time counts towards the cumulative clock.
    """
    if T < 0:
        raise ValueError("T must be non-negative")
    if isinstance(source, ReplaySource) and len(source.decompositions) < T:
        raise ValueError(f"replay source holds {len(source.decompositions)} decompositions, need {T}")
    params = params or SolverParams()
    if initial.objective is None:
        initial = Assignment(initial.values, evaluate_objective(instance, initial))
    trace = LnsTrace(states=[] if keep_states else None)
    trace.iteration_objectives.append(initial.objective)
    trace.iteration_times.append(0.0)
    incumbent = initial
    for it in range(T):
        t0 = time.monotonic()
        decomposition = source.decompose(instance, incumbent, it)
        trace.t_cum_s += time.monotonic() - t0
        trace.decompositions.append(decomposition)
        incumbent = run_decomposition_lns(instance, incumbent, decomposition, params, trace, it)
        trace.iteration_objectives.append(incumbent.objective)
        trace.iteration_times.append(trace.t_cum_s)
    return incumbent, trace


__all__ = [
    "Decomposition",
    "DecompositionSource",
    "LnsTrace",
    "RandomSource",
    "ReplaySource",
    "SolverParams",
    "StepRecord",
    "TIME_LIMIT",
    "fix_and_optimize",
    "random_decomposition",
    "run_decomposition_lns",
    "run_lns_iterations",
    "write_trace_csv",
]
