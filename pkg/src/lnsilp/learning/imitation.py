"""Behavior cloning and stepwise forward training from demonstrations."""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from ..ilp import Assignment, IlpInstance
from ..lns import SolverParams, run_decomposition_lns
from .demos import DemoSet, collect_demonstrations
from .mlp import SoftmaxMLP
from .policy import DecompositionPolicy, ModelConfig, TrainConfig, new_policy, preset


def _by_name(instances: Sequence[IlpInstance]) -> dict:
    out = {inst.name: inst for inst in instances}
    if len(out) != len(instances):
        raise ValueError("instance names must be unique")
    return out


def bc_dataset(demos: DemoSet, instances: Sequence[IlpInstance], policy: DecompositionPolicy):
    """Stack one feature row and one subset label per variable per demonstrated step."""
    lookup = _by_name(instances)
    X, y = [], []
    for demo in demos.demos:
        inst = lookup[demo.instance]
        for state, dec in zip(demo.states, demo.decompositions):
            if dec.k != policy.k:
                raise ValueError(f"demonstration uses k={dec.k}, policy has k={policy.k}")
            X.append(policy.state_features(inst, state))
            y.append(dec.labels)
    if not X:
        raise ValueError("no demonstrations to train on")
    return np.vstack(X), np.concatenate(y)


def fresh_classifier(base: DecompositionPolicy, hidden, train: TrainConfig, seed: int) -> DecompositionPolicy:
    """Copy of ``base`` sharing its projection, with a newly initialized classifier."""
    mlp = SoftmaxMLP(
        hidden_layer_sizes=tuple(hidden),
        n_classes=base.k,
        learning_rate=train.learning_rate,
        batch_size=train.batch_size,
        epochs=train.epochs,
        random_state=seed,
    ).initialize(base.pca.components_.shape[0] + 1)
    return DecompositionPolicy(
        kind=base.kind, k=base.k, pca=base.pca, mlp=mlp, feature=base.feature,
        width=base.width, temperature=base.temperature, training_meta=dict(base.training_meta),
    )


def train_behavior_cloning(
    demos: DemoSet,
    instances: Sequence[IlpInstance],
    model: Optional[ModelConfig] = None,
    train: Optional[TrainConfig] = None,
    base: Optional[DecompositionPolicy] = None,
) -> DecompositionPolicy:
    """Per-variable cross-entropy classification of the demonstrated subset labels.

    The projection is fitted on ``instances`` unless ``base`` supplies one.
    """
    if len(demos) == 0:
        raise ValueError("demonstration set is empty")
    ks = {d.k for demo in demos.demos for d in demo.decompositions}
    if len(ks) != 1:
        raise ValueError(f"demonstrations mix subset counts {sorted(ks)}")
    k = ks.pop()
    train = train or TrainConfig()
    model = model or preset(instances[0].kind)
    if model.k != k:
        model = ModelConfig(model.pca_dim, model.hidden, k, model.temperature)
    if base is None:
        base = new_policy(instances, model, seed=train.seed)
    policy = fresh_classifier(base, model.hidden, train, train.seed)
    X, y = bc_dataset(demos, instances, policy)
    policy.mlp.fit(X, y)
    policy.training_meta.update(
        method="bc",
        pairs=demos.n_pairs(),
        rows=int(X.shape[0]),
        final_loss=policy.mlp.loss_curve_[-1] if policy.mlp.loss_curve_ else None,
        train_accuracy=policy.mlp.train_accuracy_,
        train_config={"learning_rate": train.learning_rate, "batch_size": train.batch_size,
                      "epochs": train.epochs, "seed": train.seed},
        demos={"m": demos.m, "k": demos.k, "T": demos.T, "time_limit": demos.time_limit},
    )
    return policy


def forward_training(
    instances: Sequence[IlpInstance],
    initials: Sequence[Assignment],
    T: int,
    m: int,
    k: int,
    params: Optional[SolverParams] = None,
    model: Optional[ModelConfig] = None,
    train: Optional[TrainConfig] = None,
    rng: Optional[np.random.Generator] = None,
    mode: str = "argmax",
    on_step: Optional[Callable] = None,
) -> list[DecompositionPolicy]:
    """Train one policy per step on the states reached by the previous policies.

    Step ``t`` collects horizon-1 demonstrations from the current states,
    clones them into policy ``t`` and advances every instance by one LNS pass
    with that policy's decomposition.  ``on_step(t, states, demos, policy)``
    observes each round.
    """
    if T < 1:
        raise ValueError("T must be at least 1")
    params = params or SolverParams()
    train = train or TrainConfig()
    model = model or preset(instances[0].kind)
    if model.k != k:
        model = ModelConfig(model.pca_dim, model.hidden, k, model.temperature)
    rng = rng if rng is not None else np.random.default_rng(0)
    lookup = _by_name(instances)
    base = new_policy(instances, model, seed=train.seed)
    states = {inst.name: init for inst, init in zip(instances, initials)}
    policies = []
    for t in range(T):
        order = [inst.name for inst in instances if inst.name in states]
        demos = collect_demonstrations(
            [lookup[n] for n in order], [states[n] for n in order], 1, m, k, params, rng
        )
        step_train = TrainConfig(train.learning_rate, train.batch_size, train.epochs, train.seed + t)
        policy = train_behavior_cloning(demos, instances, model, step_train, base=base)
        policy.training_meta.update(method="ft", step=t)
        if on_step is not None:
            on_step(t, dict(states), demos, policy)
        kept = {d.instance for d in demos.demos}
        next_states = {}
        for name in order:
            if name not in kept:
                continue
            inst = lookup[name]
            dec = policy.predict(inst, states[name], mode)
            next_states[name] = run_decomposition_lns(inst, states[name], dec, params, iteration=t)
        states = next_states
        policies.append(policy)
    return policies
