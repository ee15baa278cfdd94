"""Decomposition policies: featurize, classify each variable, emit a partition."""

from __future__ import annotations

import json
import weakref
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..exceptions import ConfigurationError, SchemaError, TrainingError
from ..features import PCAProjection, raw_features
from ..ilp import Assignment, IlpInstance
from ..lns import Decomposition
from .mlp import SoftmaxMLP

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    """Network shape: ``pca_dim + 1`` inputs, ``hidden`` ReLU layers, ``k`` outputs."""

    pca_dim: int = 99
    hidden: tuple = (300,)
    k: int = 2
    temperature: float = 1.0

    def clamped(self, d_in: int) -> "ModelConfig":
        """Cap the PCA width at the raw feature width (small desk-scale graphs)."""
        if self.pca_dim <= d_in:
            return self
        return ModelConfig(d_in, self.hidden, self.k, self.temperature)


# layer shapes per problem family at full size
PRESETS = {
    "mvc": ModelConfig(99, (300,), 2),
    "maxcut": ModelConfig(299, (100,), 5),
    "auction": ModelConfig(99, (300, 100), 2),
    "auction-large": ModelConfig(399, (300,), 2),
}


def preset(kind: str) -> ModelConfig:
    try:
        return PRESETS[kind]
    except KeyError:
        raise ConfigurationError(f"no model preset for kind {kind!r}; known: {sorted(PRESETS)}") from None


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 32
    epochs: int = 200
    seed: int = 0


def feature_route(instance: IlpInstance) -> str:
    return "adjacency" if instance.kind in ("mvc", "maxcut") and instance.graph is not None else "incidence"


@dataclass(eq=False)
class DecompositionPolicy:
    """A fitted projection plus a per-variable classifier over ``k`` subset labels."""

    kind: str
    k: int
    pca: PCAProjection
    mlp: SoftmaxMLP
    feature: str = "adjacency"
    width: Optional[int] = None  # incidence width; None for adjacency
    temperature: float = 1.0
    training_meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mlp.n_features_in_ != self.pca.components_.shape[0] + 1:
            raise ValueError("classifier input width must equal projection width + 1")
        if self.mlp.n_classes != self.k:
            raise ValueError("classifier output width must equal k")
        self._cache = {}

    # features -------------------------------------------------------------

    def projected(self, instance: IlpInstance) -> np.ndarray:
        """Projected structural rows; cached per instance object."""
        key = id(instance)
        hit = self._cache.get(key)
        if hit is not None and hit[0]() is instance:
            return hit[1]
        route = feature_route(instance)
        if route != self.feature:
            raise ValueError(f"policy expects {self.feature} features, instance {instance.name!r} gives {route}")
        raw = raw_features(instance, width=self.width)
        if raw.values.shape[1] != self.pca.n_features_in_:
            raise ValueError(
                f"feature schema {raw.schema} does not match policy input width {self.pca.n_features_in_}"
            )
        out = self.pca.transform(raw.values)
        ref = weakref.ref(instance, lambda _r, key=key: self._cache.pop(key, None))
        self._cache[key] = (ref, out)
        return out

    def state_features(self, instance: IlpInstance, incumbent) -> np.ndarray:
        x = incumbent.values if isinstance(incumbent, Assignment) else np.asarray(incumbent, dtype=float)
        return np.hstack([self.projected(instance), x[instance.decomposable_ids][:, None]])

    # inference --------------------------------------------------------------

    def predict_proba(self, instance, incumbent, temperature: Optional[float] = None) -> np.ndarray:
        t = self.temperature if temperature is None else temperature
        return self.mlp.predict_proba(self.state_features(instance, incumbent), temperature=t)

    def predict(
        self,
        instance: IlpInstance,
        incumbent,
        mode: str = "argmax",
        rng: Optional[np.random.Generator] = None,
    ) -> Decomposition:
        X = self.state_features(instance, incumbent)
        if mode == "argmax":
            labels = self.mlp.predict(X)
        elif mode == "sample":
            if rng is None:
                raise ValueError("sample mode needs an rng")
            labels = sample_labels(self.mlp.predict_proba(X, temperature=self.temperature), rng)
        else:
            raise ValueError(f"unknown mode {mode!r}")
        return Decomposition(labels, self.k, "policy")

    # serialization ------------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": self.kind,
            "k": self.k,
            "feature": {"route": self.feature, "width": self.width},
            "pca": self.pca.to_dict(),
            "layers": self.mlp.layers_to_list(),
            "activations": ["relu"] * (len(self.mlp.coefs_) - 1) + ["softmax"],
            "temperature": self.temperature,
            "training_meta": self.training_meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DecompositionPolicy":
        for key in ("schema_version", "kind", "k", "pca", "layers"):
            if key not in d:
                raise SchemaError(f"policy file lacks {key!r}", field=key)
        if d["schema_version"] != SCHEMA_VERSION:
            raise SchemaError(f"unsupported policy schema_version {d['schema_version']}", field="schema_version")
        acts = d.get("activations")
        if acts is not None and (acts[-1] != "softmax" or any(a != "relu" for a in acts[:-1])):
            raise SchemaError("only relu hidden layers with a softmax output are supported", field="activations")
        feat = d.get("feature", {"route": "adjacency", "width": None})
        return cls(
            kind=d["kind"],
            k=int(d["k"]),
            pca=PCAProjection.from_dict(d["pca"]),
            mlp=SoftmaxMLP.from_layers(d["layers"]),
            feature=feat["route"],
            width=feat["width"],
            temperature=float(d.get("temperature", 1.0)),
            training_meta=d.get("training_meta", {}),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path) -> "DecompositionPolicy":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}", location=f"{path}:{exc.lineno}") from exc


def sample_labels(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One categorical draw per row by inverse CDF."""
    if not np.all(np.isfinite(probs)):
        raise TrainingError("policy produced non-finite probabilities")
    cdf = np.cumsum(probs, axis=1)
    u = rng.random(probs.shape[0])[:, None] * cdf[:, -1:]
    return np.minimum((u >= cdf).sum(axis=1), probs.shape[1] - 1)


def new_policy(
    instances: Sequence[IlpInstance], config: ModelConfig, seed: int = 0, kind: Optional[str] = None
) -> DecompositionPolicy:
    """Fit the projection on ``instances`` and Glorot-initialize the classifier."""
    if not instances:
        raise ValueError("need at least one instance to fit the projection")
    routes = {feature_route(inst) for inst in instances}
    if len(routes) != 1:
        raise ValueError("instances mix adjacency and incidence features")
    route = routes.pop()
    width = None
    if route == "incidence":
        from ..features import HASH_CAP

        width = max(1, min(HASH_CAP, max(len(inst.constraints) for inst in instances)))
    raws = [raw_features(inst, width=width).values for inst in instances]
    d_in = raws[0].shape[1]
    if any(r.shape[1] != d_in for r in raws):
        raise ValueError("instances produce raw features of different widths")
    config = config.clamped(d_in)
    pca = PCAProjection(config.pca_dim).fit(np.vstack(raws))
    mlp = SoftmaxMLP(hidden_layer_sizes=tuple(config.hidden), n_classes=config.k, random_state=seed)
    mlp.initialize(config.pca_dim + 1)
    return DecompositionPolicy(
        kind=kind or instances[0].kind,
        k=config.k,
        pca=pca,
        mlp=mlp,
        feature=route,
        width=width,
        temperature=config.temperature,
        training_meta={"model_config": {"pca_dim": config.pca_dim, "hidden": list(config.hidden), "k": config.k}},
    )


class PolicySource:
    """LNS decomposition source backed by one policy or one policy per iteration."""

    def __init__(self, policies, mode: str = "argmax", rng: Optional[np.random.Generator] = None):
        self.policies = list(policies) if isinstance(policies, (list, tuple)) else [policies]
        if not self.policies:
            raise ValueError("need at least one policy")
        self.mode = mode
        self.rng = rng

    def decompose(self, instance, incumbent, iteration):
        # past the last stepwise policy, keep using the last one
        policy = self.policies[min(iteration, len(self.policies) - 1)]
        return policy.predict(instance, incumbent, self.mode, self.rng)


def save_policies(policies: Sequence[DecompositionPolicy], path) -> None:
    """One policy, or a list of stepwise policies, as a single JSON file."""
    if len(policies) == 1:
        payload = policies[0].to_dict()
    else:
        payload = {"schema_version": SCHEMA_VERSION, "stepwise": [p.to_dict() for p in policies]}
    Path(path).write_text(json.dumps(payload) + "\n")


def load_policies(path) -> list[DecompositionPolicy]:
    try:
        d = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigurationError(f"policy file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}", location=f"{path}:{exc.lineno}") from exc
    if "stepwise" in d:
        return [DecompositionPolicy.from_dict(p) for p in d["stepwise"]]
    return [DecompositionPolicy.from_dict(d)]

