"""Experiment harness: configuration sweep, matched-budget benchmark, anytime profiles."""

from __future__ import annotations

import csv
import logging
import math
import time
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .exceptions import ConfigurationError
from .heuristics import HEURISTICS, run_heuristic
from .ilp import Assignment, IlpInstance, evaluate_objective
from .instances import initial_solution
from .lns import LnsTrace, RandomSource, SolverParams, run_lns_iterations
from .solver.base import TIME_LIMIT, SolveRequest

logger = logging.getLogger(__name__)

LNS_METHODS = ("random-lns", "bc-lns", "ft-lns", "rl-lns")
LEARNED_METHODS = ("bc-lns", "ft-lns", "rl-lns")
METHODS = LNS_METHODS + ("direct-solver",) + HEURISTICS

RECORD_COLUMNS = ["instance", "method", "seed", "iter", "t_cum_s", "objective"]
SWEEP_COLUMNS = ["k", "t_limit_s", "ratio_mean", "ratio_stderr", "n"]


def substream(master_seed: int, name: str, *keys: int) -> np.random.Generator:
    """Independent generator for a named purpose under one master seed."""
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), zlib.crc32(name.encode()), *map(int, keys)]))


def name_key(name: str) -> int:
    return zlib.crc32(name.encode())


def mean_stderr(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return math.nan, math.nan
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
    return float(v.mean()), se


def _initials(instances, initials):
    if initials is not None:
        if len(initials) != len(instances):
            raise ValueError("one initial solution per instance is required")
        return list(initials)
    out = []
    for inst in instances:
        try:
            out.append(initial_solution(inst))
        except ValueError:
            out.append(None)
    return out


# sweep ---------------------------------------------------------------------


@dataclass
class SweepCell:
    k: int
    t_limit_s: float
    ratios: list

    @property
    def n(self) -> int:
        return len(self.ratios)

    @property
    def ratio_mean(self) -> float:
        return mean_stderr(self.ratios)[0]

    @property
    def ratio_stderr(self) -> float:
        return mean_stderr(self.ratios)[1]


@dataclass
class SweepResult:
    cells: list
    traces: list = field(default_factory=list)  # (instance, k, t, seed, initial, trace)

    @property
    def selected(self) -> tuple:
        best = max(self.cells, key=lambda c: c.ratio_mean)
        return best.k, best.t_limit_s

    def cell(self, k: int, t: float) -> SweepCell:
        for c in self.cells:
            if c.k == k and c.t_limit_s == t:
                return c
        raise KeyError((k, t))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(SWEEP_COLUMNS)
            for c in self.cells:
                w.writerow([c.k, repr(c.t_limit_s), repr(c.ratio_mean), repr(c.ratio_stderr), c.n])


def improvement_ratio(trace: LnsTrace) -> float:
    """Objective decrease per wall-clock second of one LNS run."""
    delta = trace.iteration_objectives[0] - trace.iteration_objectives[-1]
    return delta / trace.t_cum_s if trace.t_cum_s > 0 else 0.0


def sweep_config(
    instances: Sequence[IlpInstance],
    k_values: Sequence[int] = (2, 3, 4, 5),
    t_values: Sequence[float] = (1.0, 2.0, 3.0),
    seeds: Sequence[int] = (0, 1, 2, 3, 4),
    solver=None,
    initials: Optional[Sequence[Assignment]] = None,
    keep_traces: bool = False,
) -> SweepResult:
    """One random-decomposition pass per instance, seed and ``(k, t)`` cell.

    Each pass scores ``(J(initial) - J(final)) / wall-clock``; cells report
    mean and standard error over instances and seeds.
    """
    if not k_values or not t_values:
        raise ValueError("k and t ranges must be non-empty")
    starts = _initials(instances, initials)
    cells = []
    traces = []
    for k in k_values:
        for t in t_values:
            ratios = []
            for inst, init in zip(instances, starts):
                if init is None:
                    logger.warning("skipping %s: no initial solution", inst.name)
                    continue
                for seed in seeds:
                    params = SolverParams(time_limit=float(t), seed=seed)
                    if solver is not None:
                        params.solver = solver
                    rng = substream(seed, "decomposition", name_key(inst.name), k)
                    _, trace = run_lns_iterations(inst, init, RandomSource(k, rng), 1, params,
                                                  keep_states=keep_traces)
                    ratios.append(improvement_ratio(trace))
                    if keep_traces:
                        traces.append((inst, k, float(t), seed, init, trace))
            cells.append(SweepCell(int(k), float(t), ratios))
    return SweepResult(cells, traces)


# benchmark -----------------------------------------------------------------


@dataclass
class BenchRecord:
    instance: str
    method: str
    seed: int
    iters: list
    times: list
    objectives: list
    status: str = ""
    # node budgets of clock-limited solves, keyed "iteration:subset"
    budgets: dict = field(default_factory=dict)
    trace: Optional[LnsTrace] = None
    initial: Optional[Assignment] = None
    final: Optional[Assignment] = None

    @property
    def final_objective(self) -> float:
        return self.objectives[-1]

    @property
    def wall(self) -> float:
        return self.times[-1]

    @property
    def key(self) -> str:
        return f"{self.instance}|{self.method}|{self.seed}"

    def rows(self):
        for i, t, obj in zip(self.iters, self.times, self.objectives):
            yield [self.instance, self.method, self.seed, i, repr(float(t)), repr(float(obj))]


@dataclass
class BenchResult:
    records: list
    direct_budget_s: Optional[float] = None
    lns_max_wall_s: Optional[float] = None

    def replay_budgets(self) -> dict:
        return {r.key: r.budgets for r in self.records if r.budgets}


def write_records_csv(path, records: Sequence[BenchRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RECORD_COLUMNS)
        for r in records:
            w.writerows(r.rows())


def read_records_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def compare_record_rows(a: list[dict], b: list[dict], ignore=("t_cum_s",)) -> list[str]:
    """Human-readable differences between two record tables (empty when identical)."""
    diffs = []
    if len(a) != len(b):
        diffs.append(f"row count {len(a)} != {len(b)}")
    for i, (ra, rb) in enumerate(zip(a, b)):
        for col in RECORD_COLUMNS:
            if col in ignore:
                continue
            if ra[col] != rb[col]:
                diffs.append(f"row {i} column {col}: {ra[col]} != {rb[col]}")
    return diffs


def _budget_map(limited: dict) -> dict:
    return {f"{i}:{s}": n for (i, s), n in sorted(limited.items())}


def _parse_budget_map(d: dict) -> dict:
    out = {}
    for key, n in d.items():
        i, s = key.split(":")
        out[(int(i), int(s))] = int(n)
    return out


def _source_for(method, k, seed, inst, policies, policy_mode):
    from_name = name_key(inst.name)
    if method == "random-lns":
        return RandomSource(k, substream(seed, "decomposition", from_name))
    from .learning.policy import PolicySource

    pols = (policies or {}).get(method)
    if not pols:
        raise ConfigurationError(f"method {method} needs a policy file")
    if method != "ft-lns":
        pols = pols[:1]
    return PolicySource(pols, policy_mode, substream(seed, "policy", from_name))


def run_benchmark(
    instances: Sequence[IlpInstance],
    methods: Sequence[str],
    T: int = 10,
    k: int = 2,
    seeds: Sequence[int] = (0,),
    params: Optional[SolverParams] = None,
    policies: Optional[dict] = None,
    initials: Optional[Sequence[Assignment]] = None,
    direct_time_limit: Optional[float] = None,
    direct_node_limit: Optional[int] = None,
    policy_mode: str = "sample",
    keep_states: bool = False,
    budgets: Optional[dict] = None,
) -> BenchResult:
    """Run every method on every instance and seed.

    LNS methods run ``T`` iterations.  The direct solver, warm-started from the
    same initial solution, gets the longest LNS wall-clock seen in this
    benchmark unless ``direct_time_limit`` overrides it.

    Passing ``budgets`` (from :meth:`BenchResult.replay_budgets` of an earlier
    run) switches to replay mode: the clock is dropped, solves that stopped on
    it get their recorded node counts and every other solve runs to completion,
    which reproduces the earlier objectives regardless of machine speed.
    """
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise ConfigurationError(f"unknown methods {unknown}; choose from {list(METHODS)}")
    for m in methods:
        if m in LEARNED_METHODS and not (policies or {}).get(m):
            raise ConfigurationError(f"method {m} needs a policy file")
    params = params or SolverParams()
    replay = budgets is not None
    budgets = budgets or {}
    if replay:
        params = replace(params, time_limit=math.inf)
    starts = _initials(instances, initials)
    # node counts only describe the built-in solver's work
    builtin = getattr(params.solver, "name", "") == "builtin"
    records = []
    lns_walls = []
    for method in [m for m in methods if m in LNS_METHODS]:
        for inst, init in zip(instances, starts):
            if init is None:
                logger.warning("skipping %s: no initial solution", inst.name)
                continue
            for seed in seeds:
                key = f"{inst.name}|{method}|{seed}"
                p = replace(params, seed=seed, step_budgets=_parse_budget_map(budgets.get(key, {})) or None)
                source = _source_for(method, k, seed, inst, policies, policy_mode)
                final, trace = run_lns_iterations(inst, init, source, T, p, keep_states=keep_states)
                lns_walls.append(trace.t_cum_s)
                records.append(BenchRecord(
                    inst.name, method, seed,
                    list(range(T + 1)), list(trace.iteration_times), list(trace.iteration_objectives),
                    status="", budgets=_budget_map(trace.limited_steps()) if builtin else {}, trace=trace,
                    initial=init, final=final,
                ))
    lns_max = max(lns_walls) if lns_walls else None
    direct_budget = None
    if "direct-solver" in methods:
        direct_budget = direct_time_limit if direct_time_limit is not None else lns_max
        if direct_budget is None:
            raise ConfigurationError("direct-solver alone needs an explicit direct time limit")
        for inst, init in zip(instances, starts):
            if init is None:
                continue
            for seed in seeds:
                recorded = budgets.get(f"{inst.name}|direct-solver|{seed}")
                if replay and not recorded:
                    budget = math.inf
                else:
                    budget = direct_budget
                records.append(_direct(inst, init, seed, params, budget, direct_node_limit, recorded))
    for method in [m for m in methods if m in HEURISTICS]:
        for inst in instances:
            for seed in seeds:
                t0 = time.monotonic()
                a = run_heuristic(method, inst)
                dt = time.monotonic() - t0
                records.append(BenchRecord(inst.name, method, seed, [0], [dt], [a.objective], final=a))
    return BenchResult(records, direct_budget, lns_max)


def _direct(inst, init, seed, params, budget, node_limit, recorded) -> BenchRecord:
    if recorded:
        req = SolveRequest(inst, init, time_limit=math.inf, seed=seed, node_limit=int(recorded["0:0"]))
    else:
        req = SolveRequest(inst, init, time_limit=budget, seed=seed, node_limit=node_limit)
    res = params.solver.solve(req)
    final = res.assignment if res.assignment is not None else init
    obj = evaluate_objective(inst, final)
    init_obj = evaluate_objective(inst, init)
    limited = {}
    if res.status == TIME_LIMIT and getattr(params.solver, "name", "") == "builtin":
        limited = {"0:0": res.nodes}
    return BenchRecord(inst.name, "direct-solver", seed, [0, 1], [0.0, res.wall_time], [init_obj, obj],
                       status=res.status, budgets=limited, initial=init, final=final)


# anytime profiles ------------------------------------------------------------


@dataclass
class Profiles:
    time_curves: dict  # method -> instance -> [(t, best objective)]
    iter_curves: dict  # method -> instance -> [(iteration, best objective)]
    mean_iter: dict  # method -> [(iteration, mean best objective)]
    mean_time: dict  # method -> [(t, mean best objective)]


def _running_best(points):
    out = []
    best = math.inf
    for x, y in points:
        best = min(best, y)
        out.append((x, best))
    return out


def _step_value(curve, t):
    val = curve[0][1]
    for x, y in curve:
        if x <= t:
            val = y
        else:
            break
    return val


def anytime_profile(records: Sequence) -> Profiles:
    """Best-so-far objective against cumulative seconds and against iterations.

    ``records`` may be :class:`BenchRecord` objects or rows read back from a
    records CSV.
    """
    if not records:
        raise ValueError("no records")
    series: dict = {}
    for r in records:
        if isinstance(r, BenchRecord):
            for i, t, obj in zip(r.iters, r.times, r.objectives):
                series.setdefault(r.method, {}).setdefault((r.instance, r.seed), []).append((i, t, obj))
        else:
            series.setdefault(r["method"], {}).setdefault((r["instance"], int(r["seed"])), []).append(
                (int(r["iter"]), float(r["t_cum_s"]), float(r["objective"]))
            )
    time_curves, iter_curves, mean_iter, mean_time = {}, {}, {}, {}
    for method, by_run in series.items():
        tc, ic = {}, {}
        for (inst, seed), pts in by_run.items():
            pts.sort()
            label = f"{inst}#{seed}"
            tc[label] = _running_best([(t, o) for _, t, o in pts])
            ic[label] = _running_best([(i, o) for i, _, o in pts])
        time_curves[method], iter_curves[method] = tc, ic
        lengths = {len(c) for c in ic.values()}
        if len(lengths) == 1:
            xs = [x for x, _ in next(iter(ic.values()))]
            mean_iter[method] = [(x, float(np.mean([c[j][1] for c in ic.values()]))) for j, x in enumerate(xs)]
        grid = sorted({t for c in tc.values() for t, _ in c})
        mean_time[method] = [(t, float(np.mean([_step_value(c, t) for c in tc.values()]))) for t in grid]
    return Profiles(time_curves, iter_curves, mean_iter, mean_time)


def write_profiles(profiles: Profiles, out_dir) -> list[Path]:
    """``profile.csv`` plus one gnuplot ``.dat`` file per method and axis."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    csv_path = out_dir / "profile.csv"
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "run", "axis", "x", "objective"])
        for axis, curves in (("seconds", profiles.time_curves), ("iteration", profiles.iter_curves)):
            for method, by_run in curves.items():
                for run, curve in by_run.items():
                    for x, y in curve:
                        w.writerow([method, run, axis, repr(float(x)), repr(float(y))])
            means = profiles.mean_time if axis == "seconds" else profiles.mean_iter
            for method, curve in means.items():
                for x, y in curve:
                    w.writerow([method, "mean", axis, repr(float(x)), repr(float(y))])
    written.append(csv_path)
    for axis, curves, means in (
        ("seconds", profiles.time_curves, profiles.mean_time),
        ("iteration", profiles.iter_curves, profiles.mean_iter),
    ):
        for method, by_run in curves.items():
            path = out_dir / f"{method}.{axis}.dat"
            with open(path, "w") as fh:
                fh.write(f"# {method}: best objective vs {axis}; one block per run, mean last\n")
                for run, curve in by_run.items():
                    fh.write(f"# {run}\n")
                    fh.writelines(f"{x!r} {y!r}\n" for x, y in curve)
                    fh.write("\n\n")
                if method in means:
                    fh.write("# mean\n")
                    fh.writelines(f"{x!r} {y!r}\n" for x, y in means[method])
            written.append(path)
    return written
