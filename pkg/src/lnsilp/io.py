"""JSON serialization for instances and assignments.

Infinite variable bounds are written as ``null``.  Keys are sorted on write so
``dumps(loads(text))`` is a canonical form.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any, Optional, Union

from .exceptions import SchemaError
from .ilp import KINDS, OPS, Assignment, GraphMeta, IlpInstance, LinConstraint, VarDef

PathLike = Union[str, Path]


def _bound_out(b: float):
    return None if math.isinf(b) else b


def instance_to_dict(instance: IlpInstance) -> dict:
    meta: dict[str, Any] = {"kind": instance.kind}
    if instance.graph is not None:
        meta["graph"] = {
            "n": instance.graph.n,
            "edges": [[u, v, w] for u, v, w in instance.graph.edges],
        }
    return {
        "name": instance.name,
        "sense": "min",
        "vars": [
            {
                "id": v.id,
                "obj": v.obj,
                "lb": _bound_out(v.lb),
                "ub": _bound_out(v.ub),
                "integer": v.integer,
                "decomposable": v.decomposable,
            }
            for v in instance.vars
        ],
        "constraints": [
            {"name": c.name, "coeffs": [[j, a] for j, a in c.coeffs], "op": c.op, "rhs": c.rhs}
            for c in instance.constraints
        ],
        "meta": meta,
    }


def _require(d: dict, key: str, where: str):
    if not isinstance(d, dict):
        raise SchemaError("expected an object", location=where)
    if key not in d:
        raise SchemaError("missing required field", field=key, location=where)
    return d[key]


def _number(value, key: str, where: str, allow_null=False) -> float:
    if value is None and allow_null:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError("expected a number", field=key, location=where)
    return float(value)


def instance_from_dict(d: dict) -> IlpInstance:
    name = _require(d, "name", "$")
    sense = d.get("sense", "min")
    if sense != "min":
        raise SchemaError("only 'min' is supported", field="sense", location="$")
    raw_vars = _require(d, "vars", "$")
    if not isinstance(raw_vars, list):
        raise SchemaError("expected an array", field="vars", location="$")
    vars_ = []
    seen = set()
    for i, rv in enumerate(raw_vars):
        where = f"vars[{i}]"
        vid = _require(rv, "id", where)
        if isinstance(vid, bool) or not isinstance(vid, int):
            raise SchemaError("expected an integer", field="id", location=where)
        if vid in seen:
            raise SchemaError(f"duplicate variable id {vid}", field="id", location=where)
        seen.add(vid)
        lb = _number(rv.get("lb", 0.0), "lb", where, allow_null=True)
        ub = _number(rv.get("ub", 1.0), "ub", where, allow_null=True)
        vars_.append(
            VarDef(
                id=vid,
                obj=_number(_require(rv, "obj", where), "obj", where),
                lb=-math.inf if lb is None else lb,
                ub=math.inf if ub is None else ub,
                integer=bool(rv.get("integer", True)),
                decomposable=bool(rv.get("decomposable", True)),
            )
        )
    vars_.sort(key=lambda v: v.id)
    cons = []
    for i, rc in enumerate(_require(d, "constraints", "$")):
        where = f"constraints[{i}]"
        op = _require(rc, "op", where)
        if op not in OPS:
            raise SchemaError(f"unknown relation {op!r}", field="op", location=where)
        coeffs = _require(rc, "coeffs", where)
        if not isinstance(coeffs, list) or not all(
            isinstance(p, list) and len(p) == 2 for p in coeffs
        ):
            raise SchemaError("expected [[var_id, coeff], ...]", field="coeffs", location=where)
        pairs = [(p[0], _number(p[1], "coeffs", where)) for p in coeffs]
        cons.append(
            LinConstraint(
                name=str(rc.get("name", f"c{i}")),
                coeffs=tuple(pairs),
                op=op,
                rhs=_number(_require(rc, "rhs", where), "rhs", where),
            )
        )
    meta = d.get("meta") or {}
    kind = meta.get("kind", "generic")
    if kind not in KINDS:
        raise SchemaError(f"unknown kind {kind!r}", field="kind", location="meta")
    graph = None
    if meta.get("graph") is not None:
        g = meta["graph"]
        graph = GraphMeta(n=int(_require(g, "n", "meta.graph")), edges=tuple(
            tuple(e) for e in _require(g, "edges", "meta.graph")
        ))
    try:
        return IlpInstance(name=str(name), vars=tuple(vars_), constraints=tuple(cons), kind=kind, graph=graph)
    except ValueError as exc:
        raise SchemaError(str(exc), location="$") from exc


def _loads(text: str, source: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"malformed JSON: {exc.msg}", location=f"{source}:{exc.lineno}:{exc.colno}") from exc


def dumps(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, indent=1, allow_nan=False) + "\n"


def loads_instance(text: str, source: str = "<string>") -> IlpInstance:
    return instance_from_dict(_loads(text, source))


def dumps_instance(instance: IlpInstance) -> str:
    return dumps(instance_to_dict(instance))


def read_instance(path: PathLike) -> IlpInstance:
    path = Path(path)
    return loads_instance(path.read_text(encoding="utf-8"), str(path))


def write_instance(instance: IlpInstance, path: PathLike) -> None:
    Path(path).write_text(dumps_instance(instance), encoding="utf-8")


def assignment_to_dict(a: Assignment, instance_name: str, status: Optional[str] = None) -> dict:
    d = {"instance": instance_name, "values": a.values.tolist(), "objective": a.objective}
    if status is not None:
        d["status"] = status
    return d


def assignment_from_dict(d: dict) -> tuple[str, Assignment, Optional[str]]:
    """Return ``(instance_name, assignment, status)``; ``status`` is an optional extension."""
    name = _require(d, "instance", "$")
    values = _require(d, "values", "$")
    if not isinstance(values, list):
        raise SchemaError("expected an array", field="values", location="$")
    vals = [_number(v, "values", f"values[{i}]") for i, v in enumerate(values)]
    obj = d.get("objective")
    obj = None if obj is None else _number(obj, "objective", "$")
    return str(name), Assignment(vals, obj), d.get("status")


def write_assignment(a: Assignment, path: PathLike, instance_name: str, status: Optional[str] = None) -> None:
    Path(path).write_text(dumps(assignment_to_dict(a, instance_name, status)), encoding="utf-8")


def read_assignment(path: PathLike) -> tuple[str, Assignment, Optional[str]]:
    path = Path(path)
    return assignment_from_dict(_loads(path.read_text(encoding="utf-8"), str(path)))
