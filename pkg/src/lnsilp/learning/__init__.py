"""Learned decomposition policies: imitation and policy-gradient training."""

from .demos import (
    Demonstration,
    DemoSet,
    Trajectory,
    collect_demonstrations,
    replay_demonstration,
    reward,
    trajectory_from_trace,
)
from .imitation import bc_dataset, forward_training, train_behavior_cloning
from .mlp import SoftmaxMLP, glorot_uniform, mlp_backward, mlp_forward, softmax
from .policy import (
    PRESETS,
    DecompositionPolicy,
    ModelConfig,
    PolicySource,
    TrainConfig,
    load_policies,
    new_policy,
    preset,
    sample_labels,
    save_policies,
)
from .reinforce import Episode, RlConfig, reinforce_gradient, reinforce_train, rollout

__all__ = [
    "PRESETS",
    "DecompositionPolicy",
    "DemoSet",
    "Demonstration",
    "Episode",
    "ModelConfig",
    "PolicySource",
    "RlConfig",
    "SoftmaxMLP",
    "TrainConfig",
    "Trajectory",
    "bc_dataset",
    "collect_demonstrations",
    "forward_training",
    "glorot_uniform",
    "load_policies",
    "mlp_backward",
    "mlp_forward",
    "new_policy",
    "preset",
    "reinforce_gradient",
    "reinforce_train",
    "replay_demonstration",
    "reward",
    "rollout",
    "sample_labels",
    "save_policies",
    "softmax",
    "train_behavior_cloning",
    "trajectory_from_trace",
]
