"""Integer linear program data model, evaluation and a brute-force oracle.

Every instance is a minimization problem.  Maximization problems (max-cut,
auctions) are encoded by negating their objective coefficients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .exceptions import CapacityError, DimensionError

EPS_FEAS = 1e-6
EPS_INT = 1e-6

OPS = ("<=", ">=", "=")
KINDS = ("mvc", "maxcut", "auction", "generic")


@dataclass(frozen=True)
class VarDef:
    id: int
    obj: float
    lb: float = 0.0
    ub: float = 1.0
    integer: bool = True
    decomposable: bool = True


@dataclass(frozen=True)
class LinConstraint:
    name: str
    coeffs: tuple  # ((var_id, coeff), ...)
    op: str
    rhs: float

    def __post_init__(self):
        object.__setattr__(
            self, "coeffs", tuple((int(j), float(a)) for j, a in self.coeffs)
        )
        object.__setattr__(self, "rhs", float(self.rhs))


@dataclass(frozen=True)
class GraphMeta:
    """Weighted edge list carried by graph-born instances."""

    n: int
    edges: tuple  # ((u, v, w), ...)

    def __post_init__(self):
        object.__setattr__(
            self, "edges", tuple((int(u), int(v), float(w)) for u, v, w in self.edges)
        )

    def adjacency(self) -> np.ndarray:
        adj = np.zeros((self.n, self.n))
        for u, v, w in self.edges:
            adj[u, v] = w
            adj[v, u] = w
        return adj


@dataclass(frozen=True)
class RowForm:
    """Sparse constraint matrix with two-sided row bounds ``row_lo <= A x <= row_hi``."""

    A: sp.csr_matrix
    A_csc: sp.csc_matrix
    row_lo: np.ndarray
    row_hi: np.ndarray


@dataclass(frozen=True)
class IlpInstance:
    name: str
    vars: tuple
    constraints: tuple
    kind: str = "generic"
    graph: Optional[GraphMeta] = None
    sense: str = field(default="min", init=False)

    def __post_init__(self):
        object.__setattr__(self, "vars", tuple(self.vars))
        object.__setattr__(self, "constraints", tuple(self.constraints))
        self._validate()

    def _validate(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown instance kind {self.kind!r}")
        n = len(self.vars)
        for i, v in enumerate(self.vars):
            if v.id != i:
                raise ValueError(f"variable ids must be dense 0..n-1; position {i} has id {v.id}")
            if not v.lb <= v.ub:
                raise ValueError(f"variable {i}: lb {v.lb} > ub {v.ub}")
            if v.integer:
                for b in (v.lb, v.ub):
                    if math.isfinite(b) and b != math.floor(b):
                        raise ValueError(f"integer variable {i} has non-integral bound {b}")
        if not any(v.decomposable for v in self.vars):
            raise ValueError("instance needs at least one decomposable variable")
        for c in self.constraints:
            if c.op not in OPS:
                raise ValueError(f"constraint {c.name!r}: unknown relation {c.op!r}")
            if not c.coeffs:
                raise ValueError(f"constraint {c.name!r} has no coefficients")
            ids = [j for j, _ in c.coeffs]
            if len(set(ids)) != len(ids):
                raise ValueError(f"constraint {c.name!r} repeats a variable")
            if min(ids) < 0 or max(ids) >= n:
                raise ValueError(f"constraint {c.name!r} references an unknown variable")

    @property
    def n_vars(self) -> int:
        return len(self.vars)

    @cached_property
    def obj(self) -> np.ndarray:
        return np.array([v.obj for v in self.vars], dtype=float)

    @cached_property
    def lb(self) -> np.ndarray:
        return np.array([v.lb for v in self.vars], dtype=float)

    @cached_property
    def ub(self) -> np.ndarray:
        return np.array([v.ub for v in self.vars], dtype=float)

    @cached_property
    def integer_mask(self) -> np.ndarray:
        return np.array([v.integer for v in self.vars], dtype=bool)

    @cached_property
    def decomposable_ids(self) -> np.ndarray:
        return np.array([v.id for v in self.vars if v.decomposable], dtype=int)

    @cached_property
    def rows(self) -> RowForm:
        indptr = [0]
        indices = []
        data = []
        lo = np.full(len(self.constraints), -np.inf)
        hi = np.full(len(self.constraints), np.inf)
        for i, c in enumerate(self.constraints):
            for j, a in c.coeffs:
                indices.append(j)
                data.append(a)
            indptr.append(len(indices))
            if c.op in ("<=", "="):
                hi[i] = c.rhs
            if c.op in (">=", "="):
                lo[i] = c.rhs
        A = sp.csr_matrix(
            (np.array(data, dtype=float), np.array(indices, dtype=int), np.array(indptr)),
            shape=(len(self.constraints), self.n_vars),
        )
        return RowForm(A=A, A_csc=A.tocsc(), row_lo=lo, row_hi=hi)

    def with_bounds(self, lb: np.ndarray, ub: np.ndarray, name: Optional[str] = None) -> "IlpInstance":
        """Copy of the instance with new variable bounds (constraints shared)."""
        lb = np.asarray(lb, dtype=float)
        ub = np.asarray(ub, dtype=float)
        new_vars = tuple(
            v if (v.lb == lo and v.ub == hi) else replace(v, lb=float(lo), ub=float(hi))
            for v, lo, hi in zip(self.vars, lb, ub)
        )
        out = IlpInstance(
            name=name or self.name,
            vars=new_vars,
            constraints=self.constraints,
            kind=self.kind,
            graph=self.graph,
        )
        # the constraint matrix does not depend on bounds
        out.__dict__["rows"] = self.rows
        return out


class Assignment:
    """Full value vector for an instance, with an optional cached objective."""

    __slots__ = ("values", "objective")

    def __init__(self, values, objective: Optional[float] = None):
        self.values = np.asarray(values, dtype=float).copy()
        self.values.setflags(write=False)
        self.objective = None if objective is None else float(objective)

    def __len__(self):
        return len(self.values)

    def __eq__(self, other):
        if not isinstance(other, Assignment):
            return NotImplemented
        return np.array_equal(self.values, other.values) and self.objective == other.objective

    def __repr__(self):
        return f"Assignment(values={self.values.tolist()}, objective={self.objective})"


def _values(instance: IlpInstance, a) -> np.ndarray:
    x = a.values if isinstance(a, Assignment) else np.asarray(a, dtype=float)
    if x.shape != (instance.n_vars,):
        raise DimensionError(
            f"assignment has length {x.shape[0] if x.ndim else 0}, instance has {instance.n_vars} variables"
        )
    return x


def evaluate_objective(instance: IlpInstance, a) -> float:
    """Objective value ``c . x`` of an assignment."""
    x = _values(instance, a)
    return float(instance.obj @ x)


def make_assignment(instance: IlpInstance, values) -> Assignment:
    x = _values(instance, np.asarray(values, dtype=float))
    return Assignment(x, evaluate_objective(instance, x))


def snap_integral(instance: IlpInstance, x: np.ndarray, tol: float = EPS_INT) -> np.ndarray:
    """Round integer variables that lie within ``tol`` of an integer."""
    x = np.array(x, dtype=float)
    mask = instance.integer_mask
    r = np.round(x[mask])
    close = np.abs(x[mask] - r) <= tol
    xi = x[mask]
    xi[close] = r[close]
    x[mask] = xi
    x[x == 0.0] = 0.0  # drop negative zeros
    return x


@dataclass
class Violation:
    name: str
    magnitude: float


@dataclass
class FeasibilityReport:
    feasible: bool
    violations: list

    def __bool__(self):
        return self.feasible


def check_feasibility(
    instance: IlpInstance, a, eps_feas: float = EPS_FEAS, eps_int: float = EPS_INT
) -> FeasibilityReport:
    """Check constraints, bounds and integrality; report every violation."""
    x = _values(instance, a)
    violations = []
    rows = instance.rows
    if instance.constraints:
        act = rows.A @ x
        under = rows.row_lo - act
        over = act - rows.row_hi
        worst = np.maximum(under, over)
        for i in np.flatnonzero(worst > eps_feas):
            violations.append(Violation(instance.constraints[i].name, float(worst[i])))
    below = instance.lb - x
    above = x - instance.ub
    for j in np.flatnonzero(np.maximum(below, above) > eps_feas):
        violations.append(Violation(f"bounds:x{j}", float(max(below[j], above[j]))))
    mask = instance.integer_mask
    frac = np.abs(x - np.round(x))
    for j in np.flatnonzero(mask & (frac > eps_int)):
        violations.append(Violation(f"integrality:x{j}", float(frac[j])))
    bad = ~np.isfinite(x)
    for j in np.flatnonzero(bad):
        violations.append(Violation(f"nonfinite:x{j}", float("inf")))
    return FeasibilityReport(feasible=not violations, violations=violations)


@dataclass
class BruteForceResult:
    status: str  # "optimal" or "infeasible"
    assignment: Optional[Assignment]
    objective: Optional[float]


def enumeration_size(instance: IlpInstance) -> int:
    size = 1
    for v in instance.vars:
        if not v.integer and v.lb != v.ub:
            raise ValueError(f"brute force needs integral variables; x{v.id} is continuous")
        if not (math.isfinite(v.lb) and math.isfinite(v.ub)):
            raise CapacityError(f"variable x{v.id} has an infinite domain")
        size *= int(v.ub - v.lb) + 1
    return size


def brute_force_solve(
    instance: IlpInstance, cap: int = 2**22, chunk: int = 1 << 15
) -> BruteForceResult:
    """Enumerate every integral assignment and return the best feasible one.

    Enumeration runs in lexicographic order of the value vector, and only a
    strictly better objective replaces the current best, so ties resolve to
    the lexicographically smallest optimum.
    """
    total = enumeration_size(instance)
    if total > cap:
        raise CapacityError(f"enumeration size {total} exceeds cap {cap}")
    n = instance.n_vars
    lows = instance.lb
    radix = np.array([int(v.ub - v.lb) + 1 for v in instance.vars], dtype=np.int64)
    # place value of each digit; variable 0 is the most significant
    place = np.ones(n, dtype=np.int64)
    for j in range(n - 2, -1, -1):
        place[j] = place[j + 1] * radix[j + 1]
    rows = instance.rows
    best_obj = math.inf
    best_x = None
    for start in range(0, total, chunk):
        idx = np.arange(start, min(total, start + chunk), dtype=np.int64)
        X = (idx[:, None] // place[None, :]) % radix[None, :] + lows[None, :]
        ok = np.ones(len(idx), dtype=bool)
        if instance.constraints:
            act = (rows.A @ X.T).T
            ok &= np.all(act >= rows.row_lo - EPS_FEAS, axis=1)
            ok &= np.all(act <= rows.row_hi + EPS_FEAS, axis=1)
        if not ok.any():
            continue
        objs = X @ instance.obj
        objs[~ok] = np.inf
        i = int(np.argmin(objs))
        if objs[i] < best_obj:
            best_obj = float(objs[i])
            best_x = X[i].astype(float)
    if best_x is None:
        return BruteForceResult("infeasible", None, None)
    best_x[best_x == 0.0] = 0.0
    obj = evaluate_objective(instance, best_x)
    return BruteForceResult("optimal", Assignment(best_x, obj), obj)


def restricted_instance(
    instance: IlpInstance, incumbent, free_ids: Iterable[int]
) -> IlpInstance:
    """Fix every decomposable variable outside ``free_ids`` to its incumbent value.

    Non-decomposable variables keep their original bounds.
    """
    x = _values(instance, incumbent)
    free = np.zeros(instance.n_vars, dtype=bool)
    free[np.asarray(list(free_ids), dtype=int)] = True
    fix = np.zeros(instance.n_vars, dtype=bool)
    fix[instance.decomposable_ids] = True
    fix &= ~free
    lb = instance.lb.copy()
    ub = instance.ub.copy()
    lb[fix] = x[fix]
    ub[fix] = x[fix]
    return instance.with_bounds(lb, ub)


def build_instance(
    name: str,
    objective: Sequence[float],
    constraints: Sequence,
    *,
    lb=0.0,
    ub=1.0,
    integer=True,
    decomposable=True,
    kind: str = "generic",
    graph: Optional[GraphMeta] = None,
) -> IlpInstance:
    """Convenience constructor; scalar keyword arguments broadcast to all variables.

    ``constraints`` holds ``(coeffs, op, rhs)`` or ``(name, coeffs, op, rhs)`` tuples,
    where ``coeffs`` is a mapping or a sequence of ``(var_id, coeff)`` pairs.
    """
    n = len(objective)

    def per_var(val):
        if np.ndim(val) == 0:
            return [val] * n
        return list(val)

    lbs, ubs, ints, decs = per_var(lb), per_var(ub), per_var(integer), per_var(decomposable)
    vars_ = tuple(
        VarDef(j, float(objective[j]), float(lbs[j]), float(ubs[j]), bool(ints[j]), bool(decs[j]))
        for j in range(n)
    )
    cons = []
    for i, spec in enumerate(constraints):
        if len(spec) == 4:
            cname, coeffs, op, rhs = spec
        else:
            coeffs, op, rhs = spec
            cname = f"c{i}"
        if isinstance(coeffs, dict):
            coeffs = sorted(coeffs.items())
        cons.append(LinConstraint(cname, tuple(coeffs), op, rhs))
    return IlpInstance(name=name, vars=vars_, constraints=tuple(cons), kind=kind, graph=graph)
