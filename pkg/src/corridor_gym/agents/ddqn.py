"""Double DQN with a shared policy network across all aircraft."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..errors import ConfigError
from ..sim import SpeedCommand
from .mlp import MlpNetwork, make_optimizer, td_loss_and_grads
from .replay import ReplayBuffer

N_ACTIONS = len(SpeedCommand)


@dataclass
class DdqnConfig:
    batch_size: int = 512
    hidden_nodes: int = 128
    hidden_layers: int = 2
    gamma: float = 0.99
    eps_decay_steps: int = 500_000
    eps_start: float = 0.999
    eps_end: float = 0.0001
    replay_capacity: int = 5_000_000
    learning_rate: float = 0.0001
    target_update_freq: int = 50_000
    n_workers: int = 40
    optimizer: str = "sgd"
    train_interval: int = 1  # transitions per gradient step
    learning_starts: int = 0  # transitions before the first gradient step (batch size if smaller)
    dtype: str = "float32"

    def validate(self) -> "DdqnConfig":
        if not 0 < self.gamma <= 1:
            raise ConfigError(f"gamma must be in (0, 1], got {self.gamma}")
        if not 0 <= self.eps_end <= self.eps_start <= 1:
            raise ConfigError("need 0 <= eps_end <= eps_start <= 1")
        for name in ("batch_size", "hidden_nodes", "hidden_layers", "eps_decay_steps", "replay_capacity",
                     "target_update_freq", "n_workers", "train_interval"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"optimizer must be sgd or adam, got {self.optimizer!r}")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError("dtype must be float32 or float64")
        if self.learning_starts < 0:
            raise ConfigError("learning_starts must be non-negative")
        return self

    def layer_sizes(self, input_dim: int) -> list:
        return [input_dim] + [self.hidden_nodes] * self.hidden_layers + [N_ACTIONS]


def epsilon_at(step: int, cfg: DdqnConfig) -> float:
    """Linear decay from eps_start at step 0 to eps_end at eps_decay_steps."""
    if step >= cfg.eps_decay_steps:
        return cfg.eps_end
    frac = max(step, 0) / cfg.eps_decay_steps
    return cfg.eps_start + (cfg.eps_end - cfg.eps_start) * frac


def greedy_actions(q: np.ndarray) -> np.ndarray:
    # np.argmax returns the first maximum: ties go to the lowest action index
    return np.argmax(q, axis=-1)


def act_epsilon_greedy_batch(net: MlpNetwork, obs, eps: float, rng: np.random.Generator) -> np.ndarray:
    obs = np.atleast_2d(np.asarray(obs))
    n = obs.shape[0]
    explore = rng.random(n) < eps
    random_a = rng.integers(0, N_ACTIONS, size=n)
    greedy = greedy_actions(net.forward(obs)) if not explore.all() else random_a
    return np.where(explore, random_a, greedy)


def act_epsilon_greedy(net: MlpNetwork, obs, eps: float, rng: np.random.Generator) -> SpeedCommand:
    return SpeedCommand(int(act_epsilon_greedy_batch(net, obs, eps, rng)[0]))


def ddqn_targets(rewards, next_obs, dones, online: MlpNetwork, target: MlpNetwork, gamma: float) -> np.ndarray:
    """y = r for terminal transitions, else r + gamma * Q_target(s', argmax_a Q_online(s', a))."""
    rewards = np.asarray(rewards, dtype=np.float64)
    dones = np.asarray(dones, dtype=bool)
    next_obs = np.atleast_2d(np.asarray(next_obs))
    a_star = greedy_actions(online.forward(next_obs))
    q_next = target.forward(next_obs)[np.arange(len(a_star)), a_star].astype(np.float64)
    return np.where(dones, rewards, rewards + gamma * q_next)


def ddqn_target(transition, online: MlpNetwork, target: MlpNetwork, gamma: float) -> float:
    """Target for one (obs, action, reward, next_obs, done) transition."""
    _, _, r, next_obs, done = transition
    if done:
        return float(r)
    return float(ddqn_targets([r], [next_obs], [done], online, target, gamma)[0])


class DdqnAgent:
    """Learner state: online/target networks, optimizer, replay memory and counters."""

    def __init__(self, input_dim: int, cfg: Optional[DdqnConfig] = None, seed: Optional[int] = 0):
        self.cfg = (cfg or DdqnConfig()).validate()
        self.rng = np.random.default_rng(seed)
        self.online = MlpNetwork(self.cfg.layer_sizes(input_dim), rng=self.rng, dtype=self.cfg.dtype)
        self.target = self.online.copy()
        self.optimizer = make_optimizer(self.cfg.optimizer, self.cfg.learning_rate)
        self.buffer = ReplayBuffer(self.cfg.replay_capacity, input_dim, dtype=self.cfg.dtype)
        self.train_steps = 0
        self.transitions_seen = 0
        self._owed = 0.0

    @property
    def epsilon(self) -> float:
        return epsilon_at(self.transitions_seen, self.cfg)

    def snapshot(self) -> tuple:
        """Read-only copy of the online parameters for rollout workers."""
        params = tuple(p.copy() for p in self.online.params)
        for p in params:
            p.flags.writeable = False
        return params

    def observe(self, obs, actions, rewards, next_obs, dones) -> None:
        self.buffer.add_batch(obs, actions, rewards, next_obs, dones)
        self.transitions_seen += len(actions)
        self._owed += len(actions) / self.cfg.train_interval

    def train_step(self) -> Optional[float]:
        """One mini-batch step on the TD error; None while the buffer is too small."""
        cfg = self.cfg
        if len(self.buffer) < max(cfg.batch_size, cfg.learning_starts):
            return None
        obs, actions, rewards, next_obs, dones = self.buffer.sample(cfg.batch_size, self.rng)
        y = ddqn_targets(rewards, next_obs, dones, self.online, self.target, cfg.gamma)
        loss, grads = td_loss_and_grads(self.online, obs, actions, y)
        self.optimizer.step(self.online.params, grads)
        self.train_steps += 1
        if self.train_steps % cfg.target_update_freq == 0:
            self.update_target()
        return loss

    def train_owed(self) -> list:
        """Run the gradient steps accrued by observed transitions (one per ``train_interval``)."""
        losses = []
        while self._owed >= 1.0:
            self._owed -= 1.0
            loss = self.train_step()
            if loss is None:
                self._owed = 0.0
                break
            losses.append(loss)
        return losses

    def update_target(self) -> None:
        self.target.load_from(self.online)


def network_from_params(params: Sequence[np.ndarray], activation: str = "relu") -> MlpNetwork:
    sizes = [params[0].shape[0]] + [p.shape[1] for p in params[0::2]]
    return MlpNetwork(sizes, activation, dtype=params[0].dtype, params=list(params))
