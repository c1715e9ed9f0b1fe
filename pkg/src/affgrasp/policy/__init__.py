from .mixture import (
    InvalidDepthError,
    MixtureConfig,
    NoTargetError,
    RewardConfig,
    alpha,
    pi_mod,
    reward,
    select_target,
)
from .rollout import RolloutConfig, evaluate_policy, run_training
from .sac import ReplayBuffer, SACAgent, SACConfig

__all__ = [
    "InvalidDepthError",
    "MixtureConfig",
    "NoTargetError",
    "ReplayBuffer",
    "RewardConfig",
    "RolloutConfig",
    "SACAgent",
    "SACConfig",
    "alpha",
    "evaluate_policy",
    "pi_mod",
    "reward",
    "run_training",
    "select_target",
]
