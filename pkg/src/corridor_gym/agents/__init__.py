from .checkpoint import load_policy, save_policy
from .ddqn import (DdqnAgent, DdqnConfig, act_epsilon_greedy, act_epsilon_greedy_batch, ddqn_target,
                   ddqn_targets, epsilon_at)
from .mlp import Adam, MlpNetwork, Sgd, gradient_check, td_loss, td_loss_and_grads
from .policies import QPolicy, UnequippedPolicy, unequipped_policy
from .replay import ReplayBuffer

__all__ = [
    "Adam", "DdqnAgent", "DdqnConfig", "MlpNetwork", "QPolicy", "ReplayBuffer", "Sgd", "UnequippedPolicy",
    "act_epsilon_greedy", "act_epsilon_greedy_batch", "ddqn_target", "ddqn_targets", "epsilon_at",
    "gradient_check", "load_policy", "save_policy", "td_loss", "td_loss_and_grads", "unequipped_policy",
]
