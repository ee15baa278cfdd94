"""Run an external MILP solver through files and a command template.

Each call writes ``<uuid>.instance.json`` and ``<uuid>.warm.json`` into the
exchange directory, runs the command and reads ``<uuid>.out.json``.  The
template may use ``{instance} {warm} {out} {time_limit_s} {seed}`` and
optionally ``{node_limit}``.  Any failure (crash, timeout, unreadable or
infeasible output, a result worse than the warm start) hands back the warm
start with a warning.
"""

from __future__ import annotations

import json
import logging
import math
import shlex
import subprocess
import tempfile
import time
import uuid
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from ..exceptions import ConfigurationError, SchemaError
from ..ilp import Assignment, check_feasibility, evaluate_objective
from ..io import read_assignment, write_assignment, write_instance
from .base import ERROR, STATUSES, TIME_LIMIT, SolveRequest, SolveResult, fallback_result

logger = logging.getLogger(__name__)


@dataclass
class ExternalAdapter:
    command: str
    exchange_dir: Optional[str] = None
    grace_s: float = 5.0
    keep_files: bool = False

    name = "adapter"

    def __post_init__(self):
        if "{instance}" not in self.command or "{out}" not in self.command:
            raise ConfigurationError("adapter command must reference {instance} and {out}")

    @classmethod
    def from_config(cls, path) -> "ExternalAdapter":
        try:
            cfg = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigurationError(f"adapter config {path} not found") from None
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}", location=f"{path}:{exc.lineno}") from exc
        if "command" not in cfg:
            raise ConfigurationError(f"adapter config {path} lacks 'command'")
        return cls(
            command=cfg["command"],
            exchange_dir=cfg.get("exchange_dir"),
            grace_s=float(cfg.get("grace_s", 5.0)),
            keep_files=bool(cfg.get("keep_files", False)),
        )

    def to_config(self) -> dict:
        return {"command": self.command, "exchange_dir": self.exchange_dir,
                "grace_s": self.grace_s, "keep_files": self.keep_files}

    def _fail(self, request, status, start, message) -> SolveResult:
        logger.warning("external solver: %s; keeping warm start", message)
        res = fallback_result(request, status, time.monotonic() - start, message)
        res.warnings.append(message)
        return res

    def solve(self, request: SolveRequest) -> SolveResult:
        start = time.monotonic()
        base = Path(self.exchange_dir) if self.exchange_dir else Path(tempfile.gettempdir())
        base.mkdir(parents=True, exist_ok=True)
        tag = uuid.uuid4().hex
        paths = {k: base / f"{tag}.{k}.json" for k in ("instance", "warm", "out")}
        inst = request.instance
        write_instance(inst, paths["instance"])
        if request.warm_start is not None:
            write_assignment(request.warm_start, paths["warm"], inst.name)
        fields = {
            "instance": str(paths["instance"]),
            "warm": str(paths["warm"]) if request.warm_start is not None else "",
            "out": str(paths["out"]),
            "time_limit_s": repr(float(request.time_limit)) if math.isfinite(request.time_limit) else "inf",
            "seed": str(request.seed),
            "node_limit": "" if request.node_limit is None else str(request.node_limit),
        }
        argv = [part.format(**fields) for part in shlex.split(self.command)]
        timeout = request.time_limit + self.grace_s if math.isfinite(request.time_limit) else None
        try:
            proc = subprocess.run(argv, capture_output=True, text=True, timeout=timeout)
            if proc.returncode != 0:
                tail = (proc.stderr or "").strip().splitlines()[-1:] or [""]
                return self._fail(request, ERROR, start, f"exit status {proc.returncode}: {tail[0]}")
            try:
                name, out, status = read_assignment(paths["out"])
            except (FileNotFoundError, SchemaError, ValueError) as exc:
                return self._fail(request, ERROR, start, f"unreadable output ({exc})")
            return self._accept(request, out, status, start)
        except subprocess.TimeoutExpired:
            return self._fail(request, TIME_LIMIT, start, "solver exceeded its time limit plus grace")
        except OSError as exc:
            return self._fail(request, ERROR, start, f"could not start solver ({exc})")
        finally:
            if not self.keep_files:
                for p in paths.values():
                    p.unlink(missing_ok=True)

    def _accept(self, request, out, status, start) -> SolveResult:
        inst = request.instance
        if status is not None and status not in STATUSES:
            return self._fail(request, ERROR, start, f"unknown status {status!r}")
        if out is None or out.values.shape != (inst.n_vars,):
            if status is not None and status != ERROR and request.warm_start is None:
                return SolveResult(None, math.inf, status, time.monotonic() - start)
            return self._fail(request, ERROR, start, "output has no usable assignment")
        if not check_feasibility(inst, out).feasible:
            return self._fail(request, ERROR, start, "output assignment is infeasible")
        obj = evaluate_objective(inst, out)
        ws = request.warm_start
        if ws is not None and obj > ws.objective:
            return self._fail(request, ERROR, start, "output is worse than the warm start")
        wall = time.monotonic() - start
        status = status or TIME_LIMIT
        if ws is not None and np.array_equal(out.values, ws.values):
            return fallback_result(request, status, wall, "")
        return SolveResult(Assignment(out.values, obj), obj, status, wall)
