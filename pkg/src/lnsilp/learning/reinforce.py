"""Monte-Carlo policy gradient with return-to-go weights."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..exceptions import TrainingError
from ..ilp import Assignment, IlpInstance, evaluate_objective
from ..lns import Decomposition, SolverParams, run_decomposition_lns
from .mlp import SoftmaxMLP
from .policy import DecompositionPolicy, ModelConfig, new_policy, preset, sample_labels

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RlConfig:
    trajectories: int = 5
    learning_rate: float = 1e-3
    updates: int = 10
    gamma: float = 1.0
    baseline: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.gamma != 1.0:
            raise ValueError("the discount factor is fixed to 1")
        if self.trajectories < 1:
            raise ValueError("need at least one trajectory per update")
        if self.updates < 0:
            raise ValueError("updates must be non-negative")
        if not self.learning_rate > 0:
            raise ValueError("learning rate must be positive")


@dataclass
class Episode:
    """Per-step feature matrices, sampled labels and rewards of one rollout."""

    features: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    rewards: list = field(default_factory=list)

    def returns_to_go(self) -> np.ndarray:
        return np.cumsum(np.asarray(self.rewards, dtype=float)[::-1])[::-1]


def reinforce_gradient(mlp: SoftmaxMLP, episodes: Sequence[Episode], baseline: bool = False):
    """Ascent direction ``mean_episodes sum_t G_t * grad log pi(a_t | s_t)``.

    ``log pi`` of a decomposition is the sum of its per-row label
    log-probabilities.  With ``baseline`` the mean return-to-go across the
    given episodes is subtracted step by step.  Returns ``[(dW, db), ...]``.
    """
    if not episodes:
        raise ValueError("no episodes")
    returns = [ep.returns_to_go() for ep in episodes]
    if baseline:
        horizon = max(len(g) for g in returns)
        sums = np.zeros(horizon)
        counts = np.zeros(horizon)
        for g in returns:
            sums[: len(g)] += g
            counts[: len(g)] += 1
        base = sums / np.maximum(counts, 1)
        returns = [g - base[: len(g)] for g in returns]
    n = len(episodes)
    X, a, w = [], [], []
    for ep, G in zip(episodes, returns):
        for feats, acts, g in zip(ep.features, ep.actions, G):
            if g == 0.0:
                continue
            X.append(feats)
            a.append(acts)
            w.append(np.full(len(acts), g / n))
    if not X:
        return [(np.zeros_like(W), np.zeros_like(b)) for W, b in zip(mlp.coefs_, mlp.intercepts_)]
    # gradient of sum w * log p is minus the weighted cross-entropy gradient
    _, grads = mlp.loss_and_gradients(np.vstack(X), np.concatenate(a), sample_weight=np.concatenate(w))
    return [(-gw, -gb) for gw, gb in grads]


def rollout(
    policy: DecompositionPolicy,
    instance: IlpInstance,
    initial: Assignment,
    T: int,
    params: SolverParams,
    rng: np.random.Generator,
) -> tuple[Episode, Assignment]:
    """Sample ``T`` decompositions from the policy and run them through LNS."""
    ep = Episode()
    state = initial
    if state.objective is None:
        state = Assignment(state.values, evaluate_objective(instance, state))
    for t in range(T):
        X = policy.state_features(instance, state)
        probs = policy.mlp.predict_proba(X)
        if not np.all(np.isfinite(probs)):
            bad = [i for i, (w, b) in enumerate(zip(policy.mlp.coefs_, policy.mlp.intercepts_))
                   if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b)))]
            raise TrainingError(
                f"softmax produced non-finite probabilities on {instance.name} at step {t}; "
                f"non-finite parameters in layers {bad}"
            )
        labels = sample_labels(probs, rng)
        nxt = run_decomposition_lns(instance, state, Decomposition(labels, policy.k, "policy"), params, iteration=t)
        ep.features.append(X)
        ep.actions.append(labels)
        ep.rewards.append(state.objective - nxt.objective)
        state = nxt
    return ep, state


def reinforce_train(
    instances: Sequence[IlpInstance],
    initials: Sequence[Assignment],
    T: int,
    cfg: Optional[RlConfig] = None,
    model: Optional[ModelConfig] = None,
    params: Optional[SolverParams] = None,
    policy: Optional[DecompositionPolicy] = None,
    rng: Optional[np.random.Generator] = None,
) -> DecompositionPolicy:
    """Policy-gradient ascent on the expected total objective decrease over ``T`` steps.

    Each update samples ``cfg.trajectories`` rollouts per instance and steps
    along the mean of the per-instance gradient estimates.
    """
    cfg = cfg or RlConfig()
    params = params or SolverParams()
    if policy is None:
        policy = new_policy(instances, model or preset(instances[0].kind), seed=cfg.seed)
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    history = []
    for u in range(cfg.updates):
        total = None
        returns = []
        for inst, init in zip(instances, initials):
            episodes = []
            for _ in range(cfg.trajectories):
                ep, _ = rollout(policy, inst, init, T, params, rng)
                episodes.append(ep)
                returns.append(float(sum(ep.rewards)))
            g = reinforce_gradient(policy.mlp, episodes, cfg.baseline)
            total = g if total is None else [(a + c, b + d) for (a, b), (c, d) in zip(total, g)]
        total = [(gw / len(instances), gb / len(instances)) for gw, gb in total]
        policy.mlp.apply_update(total, -cfg.learning_rate)
        history.append(float(np.mean(returns)))
        logger.info("update %d: mean return %.4f", u, history[-1])
    policy.training_meta.update(
        method="rl",
        mean_returns=history,
        rl_config={"trajectories": cfg.trajectories, "learning_rate": cfg.learning_rate,
                   "updates": cfg.updates, "gamma": cfg.gamma, "baseline": cfg.baseline, "seed": cfg.seed},
    )
    return policy
