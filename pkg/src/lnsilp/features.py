"""Per-variable feature rows for decomposition policies.

Graph-born instances (MVC, MAXCUT) use the weighted adjacency row of each
vertex; every other instance uses the variable/constraint incidence matrix.
Raw rows are reduced with PCA and the incumbent value is appended last.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import DimensionError
from .ilp import Assignment, IlpInstance

HASH_CAP = 4096


@dataclass
class FeatureMatrix:
    """Rows follow ``var_ids`` (decomposable variables, ascending id)."""

    values: np.ndarray
    schema: str
    var_ids: np.ndarray

    @property
    def shape(self):
        return self.values.shape


def _incidence_width(n_constraints: int, cap: int) -> int:
    return max(1, min(n_constraints, cap))


def incidence_features(
    instance: IlpInstance, width: Optional[int] = None, cap: int = HASH_CAP
) -> FeatureMatrix:
    """``A[i, j]`` = coefficient of decomposable variable ``i`` in constraint ``j``.

    Constraint ``j`` lands in column ``j mod width``; ``width`` defaults to the
    constraint count, capped at ``cap``.  Colliding coefficients are summed.
    """
    ids = instance.decomposable_ids
    m = len(instance.constraints)
    if width is None:
        width = _incidence_width(m, cap)
    pos = np.full(instance.n_vars, -1, dtype=int)
    pos[ids] = np.arange(ids.size)
    A = instance.rows.A_csc.tocoo()
    keep = pos[A.col] >= 0
    out = np.zeros((ids.size, width))
    np.add.at(out, (pos[A.col[keep]], A.row[keep] % width), A.data[keep])
    return FeatureMatrix(out, f"incidence[{width}]", ids)


def adjacency_features(instance: IlpInstance) -> FeatureMatrix:
    """Weighted adjacency row of every vertex."""
    if instance.graph is None:
        raise ValueError(f"instance {instance.name!r} has no graph metadata")
    n = instance.graph.n
    ids = instance.decomposable_ids
    if not np.array_equal(ids, np.arange(n)):
        raise ValueError("adjacency features need the vertices as decomposable variables 0..n-1")
    return FeatureMatrix(instance.graph.adjacency(), f"adjacency[{n}]", ids)


def raw_features(instance: IlpInstance, width: Optional[int] = None) -> FeatureMatrix:
    """Adjacency rows for graph-born kinds, incidence rows otherwise."""
    if instance.kind in ("mvc", "maxcut") and instance.graph is not None:
        return adjacency_features(instance)
    return incidence_features(instance, width=width)


def append_solution(fm: FeatureMatrix, incumbent) -> FeatureMatrix:
    x = incumbent.values if isinstance(incumbent, Assignment) else np.asarray(incumbent, dtype=float)
    if fm.var_ids.size and x.shape[0] <= fm.var_ids.max():
        raise DimensionError("incumbent is shorter than the instance")
    col = x[fm.var_ids][:, None]
    return FeatureMatrix(np.hstack([fm.values, col]), fm.schema + "+solution", fm.var_ids)


class PCAProjection(TransformerMixin, BaseEstimator):
    """Principal component projection with a deterministic sign convention.

    Components come from an eigendecomposition of the covariance, so all
    ``n_components`` rows are orthonormal even for rank-deficient data
    (surplus rows span zero-variance directions).  Each component is flipped so
    its largest-magnitude entry is positive.
    """

    def __init__(self, n_components: int = 99):
        self.n_components = n_components

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        n_rows, d_in = X.shape
        if self.n_components > d_in:
            raise ValueError(f"n_components={self.n_components} exceeds input width {d_in}")
        if n_rows < self.n_components:
            raise ValueError(f"need at least {self.n_components} rows, got {n_rows}")
        self.mean_ = X.mean(axis=0)
        Xc = X - self.mean_
        cov = (Xc.T @ Xc) / max(n_rows - 1, 1)
        evals, evecs = np.linalg.eigh(cov)
        order = np.argsort(evals)[::-1][: self.n_components]
        evals = np.clip(evals[order], 0.0, None)
        comps = evecs[:, order].T
        big = np.argmax(np.abs(comps), axis=1)
        signs = np.sign(comps[np.arange(comps.shape[0]), big])
        signs[signs == 0] = 1.0
        comps *= signs[:, None]
        total = np.clip(np.linalg.eigvalsh(cov), 0.0, None).sum()
        self.components_ = comps
        self.explained_variance_ = evals
        self.explained_variance_ratio_ = evals / total if total > 0 else np.zeros_like(evals)
        self.n_features_in_ = d_in
        rank = int(np.sum(evals > 1e-12 * max(total, 1e-300)))
        if rank < self.n_components:
            warnings.warn(
                f"data rank {rank} < n_components {self.n_components}; "
                "trailing components carry zero variance",
                stacklevel=2,
            )
        return self

    def transform(self, X):
        check_is_fitted(self, "components_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise DimensionError(f"expected width {self.n_features_in_}, got {X.shape[1]}")
        return (X - self.mean_) @ self.components_.T

    def to_dict(self) -> dict:
        return {
            "mean": self.mean_.tolist(),
            "components": self.components_.tolist(),
            "explained_variance": self.explained_variance_.tolist(),
            "d_in": int(self.n_features_in_),
            "d_out": int(self.components_.shape[0]),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PCAProjection":
        p = cls(n_components=int(d["d_out"]))
        p.mean_ = np.asarray(d["mean"], dtype=float)
        p.components_ = np.asarray(d["components"], dtype=float).reshape(int(d["d_out"]), int(d["d_in"]))
        ev = np.asarray(d.get("explained_variance", np.zeros(p.components_.shape[0])), dtype=float)
        p.explained_variance_ = ev
        total = ev.sum()
        p.explained_variance_ratio_ = ev / total if total > 0 else np.zeros_like(ev)
        p.n_features_in_ = int(d["d_in"])
        return p


def fit_pca(matrices: Sequence[FeatureMatrix], d_out: int) -> PCAProjection:
    """Fit one projection on the stacked rows of all training matrices."""
    widths = {fm.values.shape[1] for fm in matrices}
    if len(widths) != 1:
        raise ValueError(f"feature matrices disagree on width: {sorted(widths)}")
    return PCAProjection(d_out).fit(np.vstack([fm.values for fm in matrices]))


def project(p: PCAProjection, fm: FeatureMatrix) -> FeatureMatrix:
    return FeatureMatrix(p.transform(fm.values), f"pca[{p.components_.shape[0]}]<-{fm.schema}", fm.var_ids)


def build_state_features(
    instance: IlpInstance, incumbent, p: PCAProjection, width: Optional[int] = None
) -> FeatureMatrix:
    """PCA-reduced raw rows with the incumbent value appended as the last column."""
    raw = raw_features(instance, width=width)
    if raw.values.shape[1] != p.n_features_in_:
        raise ValueError(
            f"feature schema {raw.schema} does not match projection input width {p.n_features_in_}"
        )
    return append_solution(project(p, raw), incumbent)
