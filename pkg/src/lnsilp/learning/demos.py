"""Rewards, trajectories and best-of-m random demonstrations."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..exceptions import SchemaError
from ..ilp import Assignment, IlpInstance, check_feasibility, evaluate_objective
from ..lns import Decomposition, RandomSource, ReplaySource, SolverParams, run_lns_iterations

logger = logging.getLogger(__name__)


def reward(instance: IlpInstance, s: Assignment, s_next: Assignment) -> float:
    """Objective decrease from ``s`` to ``s_next`` (positive means better)."""
    return evaluate_objective(instance, s) - evaluate_objective(instance, s_next)


@dataclass
class Trajectory:
    """States ``s_0..s_T``, actions ``a_0..a_{T-1}`` and their rewards."""

    instance: str
    states: list
    actions: list
    rewards: list
    step_times: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.states) != len(self.actions) + 1 or len(self.rewards) != len(self.actions):
            raise ValueError("a trajectory needs T actions, T rewards and T+1 states")

    @property
    def horizon(self) -> int:
        return len(self.actions)

    def returns_to_go(self) -> np.ndarray:
        # discount fixed at 1
        return np.cumsum(np.asarray(self.rewards, dtype=float)[::-1])[::-1]

    def check_rewards(self, instance: IlpInstance) -> bool:
        return all(
            r == reward(instance, a, b) for r, a, b in zip(self.rewards, self.states[:-1], self.states[1:])
        )


def trajectory_from_trace(instance: IlpInstance, initial: Assignment, trace) -> Trajectory:
    """Per-iteration states and rewards of a kept-state LNS trace."""
    if trace.states is None:
        raise ValueError("trace was recorded without states")
    T = len(trace.decompositions)
    steps_per_iter = [d.k for d in trace.decompositions]
    states = [initial]
    pos = 0
    for n in steps_per_iter:
        pos += n
        states.append(trace.states[pos - 1])
    rewards = [reward(instance, a, b) for a, b in zip(states[:-1], states[1:])]
    times = np.diff(trace.iteration_times).tolist() if len(trace.iteration_times) == T + 1 else []
    return Trajectory(instance.name, states, list(trace.decompositions), rewards, times)


@dataclass
class Demonstration:
    instance: str
    initial: Assignment
    decompositions: list
    objectives: list  # after each iteration; index 0 is the initial objective
    states: list  # state before each decomposition
    rollout: int  # which of the m rollouts won
    # node counts of steps that stopped on the clock, for exact replay
    budgets: dict = field(default_factory=dict)

    @property
    def final_objective(self) -> float:
        return self.objectives[-1]


@dataclass
class DemoSet:
    demos: list
    m: int
    k: int
    T: int
    time_limit: float
    solver_seed: int = 0
    rng_seed: Optional[int] = None

    def __len__(self):
        return len(self.demos)

    def n_pairs(self) -> int:
        return sum(len(d.decompositions) for d in self.demos)

    def to_dict(self) -> dict:
        return {
            "meta": {
                "m": self.m, "k": self.k, "T": self.T, "time_limit": self.time_limit,
                "solver_seed": self.solver_seed, "rng_seed": self.rng_seed,
            },
            "demos": [
                {
                    "instance": d.instance,
                    "initial": d.initial.values.tolist(),
                    "labels": [dec.labels.tolist() for dec in d.decompositions],
                    "objectives": d.objectives,
                    "states": [s.values.tolist() for s in d.states],
                    "rollout": d.rollout,
                    "budgets": [[i, s, n] for (i, s), n in sorted(d.budgets.items())],
                }
                for d in self.demos
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DemoSet":
        try:
            meta = data["meta"]
            k = int(meta["k"])
            demos = [
                Demonstration(
                    instance=d["instance"],
                    initial=Assignment(np.asarray(d["initial"], dtype=float), d["objectives"][0]),
                    decompositions=[Decomposition(np.asarray(lab, dtype=int), k, "demo") for lab in d["labels"]],
                    objectives=[float(v) for v in d["objectives"]],
                    states=[Assignment(np.asarray(s, dtype=float)) for s in d["states"]],
                    rollout=int(d["rollout"]),
                    budgets={(int(i), int(s)): int(n) for i, s, n in d.get("budgets", [])},
                )
                for d in data["demos"]
            ]
            return cls(demos, int(meta["m"]), k, int(meta["T"]), float(meta["time_limit"]),
                       int(meta.get("solver_seed", 0)), meta.get("rng_seed"))
        except KeyError as exc:
            raise SchemaError("demo file is missing a field", field=exc.args[0]) from None

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path) -> "DemoSet":
        return cls.from_dict(json.loads(Path(path).read_text()))


def collect_demonstrations(
    instances: Sequence[IlpInstance],
    initials: Sequence[Assignment],
    T: int,
    m: int,
    k: int,
    params: Optional[SolverParams] = None,
    rng: Optional[np.random.Generator] = None,
) -> DemoSet:
    """For each instance keep the best of ``m`` random-decomposition rollouts of length ``T``.

    Ties keep the earliest rollout.  Instances whose initial solution is
    infeasible are skipped with a warning.
    """
    if m < 1 or T < 1:
        raise ValueError("m and T must be at least 1")
    if len(instances) != len(initials):
        raise ValueError("one initial solution per instance is required")
    params = params or SolverParams()
    rng = rng if rng is not None else np.random.default_rng(0)
    demos = []
    for inst, init in zip(instances, initials):
        report = check_feasibility(inst, init)
        if not report.feasible:
            logger.warning("skipping %s: initial solution infeasible", inst.name)
            continue
        init = Assignment(init.values, evaluate_objective(inst, init))
        best = None
        for r in range(m):
            _, trace = run_lns_iterations(inst, init, RandomSource(k, rng), T, params, keep_states=True)
            final = trace.iteration_objectives[-1]
            if best is None or final < best[0]:
                best = (final, r, trace)
        final, r, trace = best
        traj = trajectory_from_trace(inst, init, trace)
        demos.append(
            Demonstration(
                instance=inst.name,
                initial=init,
                decompositions=list(trace.decompositions),
                objectives=list(trace.iteration_objectives),
                states=traj.states[:-1],
                rollout=r,
                budgets=trace.limited_steps(),
            )
        )
    return DemoSet(demos, m, k, T, params.time_limit, params.seed)


def replay_demonstration(
    instance: IlpInstance, demo: Demonstration, params: Optional[SolverParams] = None
) -> float:
    """Final objective of re-running the stored decompositions from the stored start."""
    # completed steps rerun without the clock, clock-limited ones get their node counts
    params = replace(params or SolverParams(), time_limit=math.inf, step_budgets=demo.budgets or None)
    _, trace = run_lns_iterations(
        instance, demo.initial, ReplaySource(demo.decompositions), len(demo.decompositions), params
    )
    return trace.iteration_objectives[-1]

