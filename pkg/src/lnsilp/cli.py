"""Command-line interface.

Every subcommand writes ``run.json`` into ``--out-dir``; it records the full
configuration, the resolved budgets and the produced files so that
``replay`` can re-run benchmark-style commands and compare their records.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import sys
import tempfile
import time
from pathlib import Path
from typing import Optional

from .exceptions import ConfigurationError, LnsError

logger = logging.getLogger("lnsilp")

RUN_SCHEMA_VERSION = 1
SPLITS = ("train", "val", "test")
SPLIT_SIZES = {"train": 100, "val": 10, "test": 50}


# argument helpers --------------------------------------------------------------


def parse_int_list(spec: str) -> list[int]:
    """``"3"``, ``"2,4"`` or an inclusive range ``"2..5"``."""
    spec = str(spec).strip()
    try:
        if ".." in spec:
            lo, hi = spec.split("..", 1)
            lo, hi = int(lo), int(hi)
            if hi < lo:
                raise argparse.ArgumentTypeError(f"empty range {spec!r}")
            return list(range(lo, hi + 1))
        return [int(p) for p in spec.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, list or range like 2..5, got {spec!r}") from None


def parse_float_list(spec: str) -> list[float]:
    if ".." in str(spec):
        return [float(v) for v in parse_int_list(spec)]
    try:
        return [float(p) for p in str(spec).split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected numbers or a range like 1..3, got {spec!r}") from None


def positive_float(s: str) -> float:
    try:
        v = float(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {s!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive: {s!r}")
    return v


def optional_int(s: str) -> Optional[int]:
    return int(s) if str(s).strip() else None


def single_k(args) -> int:
    ks = parse_int_list(args.k)
    if len(ks) != 1:
        raise ConfigurationError(f"this command needs a single --k, got {args.k!r}")
    if ks[0] < 1:
        raise ConfigurationError("--k must be at least 1")
    return ks[0]


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# instance sets -----------------------------------------------------------------


def resolve_instance_paths(specs) -> list[Path]:
    """Files, directories of ``*.json`` files, or ``manifest.json[:split]``."""
    out: list[Path] = []
    for spec in specs:
        split = None
        p = Path(spec)
        if not p.exists() and ":" in spec:
            head, split = spec.rsplit(":", 1)
            p = Path(head)
        if p.is_dir():
            if (p / "manifest.json").exists() and split is None and not list(p.glob("*.instance.json")):
                p = p / "manifest.json"
            else:
                out.extend(sorted(q for q in p.glob("*.json") if q.name not in ("manifest.json", "run.json")))
                continue
        if not p.exists():
            raise ConfigurationError(f"instance source {spec} not found")
        if p.name == "manifest.json" or split is not None:
            manifest = json.loads(p.read_text())
            splits = [split] if split else list(SPLITS)
            for s in splits:
                if s not in manifest.get("splits", {}):
                    raise ConfigurationError(f"manifest {p} has no split {s!r}")
                out.extend(p.parent / e["file"] for e in manifest["splits"][s])
        else:
            out.append(p)
    if not out:
        raise ConfigurationError("no instances found")
    return out


def load_instances(specs):
    from .io import read_instance

    paths = resolve_instance_paths(specs)
    return paths, [read_instance(p) for p in paths]


def instance_entries(paths, instances) -> list[dict]:
    return [{"name": i.name, "path": str(p), "sha256": sha256(p)} for p, i in zip(paths, instances)]


def build_params(args, seed: Optional[int] = None):
    from .lns import SolverParams
    from .solver import make_solver

    return SolverParams(
        time_limit=args.time_limit,
        seed=args.seed if seed is None else seed,
        node_limit=getattr(args, "node_limit", None),
        solver=make_solver(args.solver),
    )


# subcommands ----------------------------------------------------------------------


def cmd_generate(args, out: Path) -> dict:
    from .bench import substream
    from .instances import make_instance
    from .io import write_instance

    if args.scale <= 0:
        raise ConfigurationError("--scale must be positive")
    splits = {}
    inst_dir = out / "instances"
    for code, split in enumerate(SPLITS):
        size = max(1, round(SPLIT_SIZES[split] * args.scale))
        entries = []
        (inst_dir / split).mkdir(parents=True, exist_ok=True)
        for i in range(size):
            seed = int(substream(args.seed, "instance-gen", code, i).integers(2**31 - 1))
            name = f"{args.kind}-{split}{i:03d}"
            inst = make_instance(
                args.kind, seed, graph=args.graph, n=args.n, p=args.p, attach_m=args.attach_m,
                items=args.items, bids=args.bids, distribution=args.distribution, name=name,
            )
            rel = Path("instances") / split / f"{name}.json"
            write_instance(inst, out / rel)
            entries.append({"id": name, "file": str(rel), "seed": seed})
        splits[split] = entries
    ids = [e["id"] for s in splits.values() for e in s]
    assert len(ids) == len(set(ids))
    manifest = {
        "kind": args.kind,
        "generator": {"graph": args.graph, "n": args.n, "p": args.p, "attach_m": args.attach_m,
                      "items": args.items, "bids": args.bids, "distribution": args.distribution},
        "seed": args.seed,
        "scale": args.scale,
        "splits": splits,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")
    print(f"wrote {len(ids)} instances ({', '.join(f'{k}={len(v)}' for k, v in splits.items())}) to {out}")
    return {"outputs": {"manifest": "manifest.json"}, "resolved": {"sizes": {k: len(v) for k, v in splits.items()}}}


def cmd_sweep(args, out: Path) -> dict:
    from .bench import sweep_config
    from .solver import make_solver

    paths, instances = load_instances(args.instances)
    ks = parse_int_list(args.k)
    ts = parse_float_list(args.t)
    seeds = parse_int_list(args.seeds) if args.seeds else list(range(args.seed, args.seed + 5))
    res = sweep_config(instances, ks, ts, seeds, solver=make_solver(args.solver))
    res.to_csv(out / "sweep.csv")
    k, t = res.selected
    for c in res.cells:
        print(f"k={c.k} t={c.t_limit_s:g}s  ratio {c.ratio_mean:.4g} +- {c.ratio_stderr:.3g}  (n={c.n})")
    print(f"selected k={k} t={t:g}s")
    return {
        "outputs": {"sweep": "sweep.csv"},
        "resolved": {"selected": {"k": k, "t_limit_s": t}, "seeds": seeds},
        "instances": instance_entries(paths, instances),
    }


def cmd_collect_demos(args, out: Path) -> dict:
    from .bench import substream
    from .instances import initial_solution
    from .learning.demos import collect_demonstrations

    paths, instances = load_instances(args.instances)
    params = build_params(args)
    demos = collect_demonstrations(
        instances, [initial_solution(i) for i in instances], args.iters, args.m, single_k(args),
        params, substream(args.seed, "demos"),
    )
    demos.rng_seed = args.seed
    demos.save(out / "demos.json")
    print(f"collected {len(demos)} demonstrations ({demos.n_pairs()} state-action pairs)")
    return {"outputs": {"demos": "demos.json"}, "instances": instance_entries(paths, instances)}


def _model_config(args, kind: str, k: int):
    from .learning.policy import ModelConfig, preset

    base = preset(kind)
    hidden = tuple(parse_int_list(args.hidden)) if args.hidden else base.hidden
    return ModelConfig(args.pca_dim or base.pca_dim, hidden, k, args.temperature)


def cmd_train(args, out: Path) -> dict:
    from .bench import substream
    from .instances import initial_solution
    from .learning import (
        DemoSet,
        RlConfig,
        TrainConfig,
        forward_training,
        load_policies,
        reinforce_train,
        save_policies,
        train_behavior_cloning,
    )

    if args.method == "bc" and not args.demos:
        raise ConfigurationError("train --method bc needs --demos (run collect-demos first)")
    paths, instances = load_instances(args.instances)
    train = TrainConfig(args.lr, args.batch_size, args.epochs, args.seed)
    if args.method == "bc":
        demos = DemoSet.load(args.demos)
        model = _model_config(args, instances[0].kind, demos.k)
        policies = [train_behavior_cloning(demos, instances, model, train)]
    elif args.method == "ft":
        k = single_k(args)
        policies = forward_training(
            instances, [initial_solution(i) for i in instances], args.iters, args.m, k,
            build_params(args), _model_config(args, instances[0].kind, k), train,
            substream(args.seed, "demos"),
        )
    else:
        k = single_k(args)
        cfg = RlConfig(args.trajectories, args.lr, args.updates, 1.0, args.baseline, args.seed)
        init = load_policies(args.init_policy)[0] if args.init_policy else None
        policies = [reinforce_train(
            instances, [initial_solution(i) for i in instances], args.iters, cfg,
            _model_config(args, instances[0].kind, k), build_params(args), init,
            substream(args.seed, "training"),
        )]
    save_policies(policies, out / "policy.json")
    print(f"trained {len(policies)} {args.method} polic{'y' if len(policies) == 1 else 'ies'} -> {out / 'policy.json'}")
    return {"outputs": {"policy": "policy.json"}, "instances": instance_entries(paths, instances)}


def _policies_from_args(args) -> dict:
    from .learning.policy import load_policies

    policies = {}
    for item in args.policy or []:
        if "=" not in item:
            raise ConfigurationError(f"--policy expects METHOD=PATH, got {item!r}")
        method, path = item.split("=", 1)
        policies[method] = load_policies(path)
    return policies


def _run_records(args, out: Path, instances, paths, methods, seeds) -> dict:
    from .bench import BenchRecord, run_benchmark, write_records_csv
    from .lns import write_trace_csv

    params = build_params(args)
    res = run_benchmark(
        instances, methods, T=args.iters, k=single_k(args), seeds=seeds, params=params,
        policies=_policies_from_args(args), direct_time_limit=args.direct_time_limit,
        direct_node_limit=args.direct_node_limit, policy_mode=args.policy_mode,
        budgets=getattr(args, "replay_budgets", None),
    )
    write_records_csv(out / "records.csv", res.records)
    write_trace_csv(out / "trace.csv", [(r.instance, r.method, r.trace) for r in res.records
                                        if isinstance(r, BenchRecord) and r.trace is not None])
    summary = {}
    for r in res.records:
        summary.setdefault(r.method, []).append(r.final_objective)
    for method, vals in summary.items():
        print(f"{method:14s} mean final objective {sum(vals) / len(vals):.6g} over {len(vals)} runs")
    return {
        "outputs": {"records": "records.csv", "trace": "trace.csv"},
        "resolved": {
            "methods": list(methods),
            "seeds": list(seeds),
            "direct_budget_s": res.direct_budget_s,
            "lns_max_wall_s": res.lns_max_wall_s,
            "replay_budgets": res.replay_budgets(),
            "statuses": {r.key: r.status for r in res.records if r.status},
        },
        "instances": instance_entries(paths, instances),
        "_result": res,
    }


def cmd_solve(args, out: Path) -> dict:
    from .io import write_assignment

    paths, instances = load_instances([args.instance])
    if args.method == "direct-solver" and args.direct_time_limit is None:
        args.direct_time_limit = args.time_limit
    info = _run_records(args, out, instances, paths, [args.method], [args.seed])
    rec = info.pop("_result").records[0]
    if rec.final is not None:
        write_assignment(rec.final, out / "solution.json", rec.instance, rec.status or None)
        info["outputs"]["solution"] = "solution.json"
    return info


def cmd_bench(args, out: Path) -> dict:
    paths, instances = load_instances(args.instances)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    seeds = parse_int_list(args.seeds) if args.seeds else [args.seed]
    info = _run_records(args, out, instances, paths, methods, seeds)
    info.pop("_result")
    return info


def cmd_profile(args, out: Path) -> dict:
    from .bench import anytime_profile, read_records_csv, write_profiles

    rows = read_records_csv(args.records)
    written = write_profiles(anytime_profile(rows), out)
    print(f"wrote {len(written)} profile files to {out}")
    return {"outputs": {"files": [str(p.relative_to(out)) for p in written]}}


def cmd_solve_ilp(args, out: Path) -> dict:
    """Standalone MILP solve with the built-in solver (the adapter's reference target)."""
    from .io import read_assignment, read_instance, write_assignment
    from .solver import BranchAndBound, SolveRequest

    inst = read_instance(args.instance)
    warm = read_assignment(args.warm)[1] if args.warm else None
    req = SolveRequest(inst, warm, time_limit=args.time_limit, seed=args.seed, node_limit=args.node_limit)
    res = BranchAndBound().solve(req)
    target = Path(args.out) if args.out else out / "solution.json"
    if res.assignment is not None:
        write_assignment(res.assignment, target, inst.name, res.status)
    else:
        target.write_text(json.dumps({"instance": inst.name, "values": [], "objective": None,
                                      "status": res.status}) + "\n")
    return {"outputs": {"solution": str(target)}, "resolved": {"status": res.status, "nodes": res.nodes}}


def cmd_replay(args, out: Path) -> dict:
    from .bench import compare_record_rows, read_records_csv

    run_path = Path(args.run)
    run = json.loads(run_path.read_text())
    if run.get("command") not in ("solve", "bench"):
        raise ConfigurationError(f"replay supports solve and bench runs, not {run.get('command')!r}")
    for entry in run.get("instances", []):
        p = Path(entry["path"])
        if p.exists() and sha256(p) != entry["sha256"]:
            raise ConfigurationError(f"instance file {p} changed since the run")
    cfg = dict(run["config"])
    cfg["out_dir"] = str(out)
    cfg["replay_budgets"] = run["resolved"]["replay_budgets"]
    if run["resolved"].get("direct_budget_s") is not None:
        cfg["direct_time_limit"] = run["resolved"]["direct_budget_s"]
    rargs = argparse.Namespace(**cfg)
    COMMANDS[run["command"]](rargs, out)
    original = read_records_csv(run_path.parent / run["outputs"]["records"])
    replayed = read_records_csv(out / "records.csv")
    diffs = compare_record_rows(original, replayed)
    for d in diffs[:20]:
        print(d)
    print(f"replay {'identical' if not diffs else f'differs in {len(diffs)} places'} "
          f"({len(original)} rows; t_cum_s not compared)")
    return {"outputs": {"records": "records.csv"}, "resolved": {"identical": not diffs, "differences": len(diffs)},
            "_exit": 0 if not diffs else 1}


COMMANDS = {
    "generate": cmd_generate,
    "sweep": cmd_sweep,
    "collect-demos": cmd_collect_demos,
    "train": cmd_train,
    "solve": cmd_solve,
    "bench": cmd_bench,
    "profile": cmd_profile,
    "replay": cmd_replay,
    "solve-ilp": cmd_solve_ilp,
}


# parser --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    g.add_argument("--solver", default="builtin", help="builtin or adapter:<config.json>")
    g.add_argument("--time-limit", type=positive_float, default=1.0, help="seconds per sub-solve (default 1)")
    g.add_argument("--k", default="2", help="subsets per decomposition; ranges like 2..5 for sweep")
    g.add_argument("--iters", type=int, default=10, help="LNS iterations / horizon T (default 10)")
    g.add_argument("--out-dir", default="out", help="directory for outputs and run.json")
    g.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="lnsilp", description="Decomposition-based LNS for integer programs.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[common], help="generate train/val/test instance sets")
    p.add_argument("--kind", choices=("mvc", "maxcut", "auction"), required=True)
    p.add_argument("--graph", choices=("er", "ba"), default="er")
    p.add_argument("--n", type=int, default=None, help="vertices (graph kinds)")
    p.add_argument("--p", type=float, default=None, help="ER edge probability")
    p.add_argument("--attach-m", type=int, default=4, help="BA edges per new vertex")
    p.add_argument("--items", type=int, default=400)
    p.add_argument("--bids", type=int, default=800)
    p.add_argument("--distribution", choices=("regions", "arbitrary"), default="regions")
    p.add_argument("--scale", type=float, default=1.0, help="multiplies the 100/10/50 split sizes")

    p = sub.add_parser("sweep", parents=[common], help="(k, t) improvement-ratio sweep")
    p.add_argument("--instances", nargs="+", required=True)
    p.add_argument("--t", default="1..3", help="sub-solve time limits, e.g. 1..3 or 1,2")
    p.add_argument("--seeds", default=None, help="seed list/range (default: 5 seeds from --seed)")

    p = sub.add_parser("collect-demos", parents=[common], help="best-of-m random demonstrations")
    p.add_argument("--instances", nargs="+", required=True)
    p.add_argument("--m", type=int, default=5)
    p.add_argument("--node-limit", type=int, default=None, help="branch-and-bound nodes per sub-solve")

    p = sub.add_parser("train", parents=[common], help="train a decomposition policy")
    p.add_argument("--method", choices=("bc", "ft", "rl"), required=True)
    p.add_argument("--instances", nargs="+", required=True)
    p.add_argument("--demos", default=None, help="demos.json (bc)")
    p.add_argument("--m", type=int, default=5, help="rollouts per demonstration (ft)")
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--pca-dim", type=int, default=None)
    p.add_argument("--hidden", default=None, help="hidden widths, e.g. 300 or 300,100")
    p.add_argument("--temperature", type=positive_float, default=1.0)
    p.add_argument("--updates", type=int, default=10, help="policy-gradient updates (rl)")
    p.add_argument("--trajectories", type=int, default=5, help="rollouts per instance per update (rl)")
    p.add_argument("--baseline", action="store_true", help="subtract the batch-mean return (rl)")
    p.add_argument("--init-policy", default=None, help="start rl from this policy file")
    p.add_argument("--node-limit", type=int, default=None, help="branch-and-bound nodes per sub-solve")

    def run_options(p):
        p.add_argument("--policy", action="append", metavar="METHOD=PATH", help="policy file for a learned method")
        p.add_argument("--policy-mode", choices=("sample", "argmax"), default="sample")
        p.add_argument("--node-limit", type=int, default=None, help="branch-and-bound nodes per sub-solve")
        p.add_argument("--direct-time-limit", type=positive_float, default=None,
                       help="override the matched direct-solver budget")
        p.add_argument("--direct-node-limit", type=int, default=None)

    p = sub.add_parser("solve", parents=[common], help="run one method on one instance")
    p.add_argument("--method", required=True)
    p.add_argument("--instance", required=True)
    run_options(p)

    p = sub.add_parser("bench", parents=[common], help="matched-budget method comparison")
    p.add_argument("--instances", nargs="+", required=True)
    p.add_argument("--methods", default="random-lns,direct-solver")
    p.add_argument("--seeds", default=None, help="seed list/range (default: --seed)")
    run_options(p)

    p = sub.add_parser("profile", parents=[common], help="anytime profiles from a records CSV")
    p.add_argument("--records", required=True)

    p = sub.add_parser("replay", parents=[common], help="re-run a solve/bench run.json and compare records")
    p.add_argument("--run", required=True)

    p = sub.add_parser("solve-ilp", parents=[common], help="solve one MILP file with the built-in solver")
    p.add_argument("--instance", required=True)
    p.add_argument("--warm", default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--node-limit", type=optional_int, default=None, help="empty means no limit")
    return parser


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    out = Path(args.out_dir)
    if args.command == "replay" and args.out_dir == "out":
        out = Path(tempfile.mkdtemp(prefix="replay-"))
    if args.command == "solve-ilp" and args.out_dir == "out" and args.out:
        out = Path(args.out).parent
    out.mkdir(parents=True, exist_ok=True)
    started = time.time()
    try:
        info = COMMANDS[args.command](args, out)
    except LnsError as exc:
        print(f"lnsilp {args.command}: error: {exc}", file=sys.stderr)
        return 2
    code = info.pop("_exit", 0)
    config = {k: v for k, v in vars(args).items() if k not in ("verbose", "replay_budgets")}
    run = {
        "schema_version": RUN_SCHEMA_VERSION,
        "command": args.command,
        "argv": argv,
        "config": config,
        "started_unix": started,
        "elapsed_s": time.time() - started,
        **info,
    }
    run.setdefault("resolved", {})
    run.setdefault("outputs", {})
    (out / "run.json").write_text(json.dumps(_jsonable(run), indent=1) + "\n")
    return code
