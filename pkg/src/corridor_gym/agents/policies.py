"""Decision policies. Every policy maps a batch of observations to speed commands."""

from __future__ import annotations

from typing import Optional, Protocol

import numpy as np

from ..sim import SpeedCommand
from .ddqn import act_epsilon_greedy_batch
from .mlp import MlpNetwork


class Policy(Protocol):
    def act(self, obs) -> SpeedCommand: ...

    def act_batch(self, obs) -> np.ndarray: ...


def unequipped_policy(obs=None) -> SpeedCommand:
    """No separation logic: keep the flight-plan speed."""
    return SpeedCommand.HOLD


class UnequippedPolicy:
    name = "unequipped"

    def act(self, obs) -> SpeedCommand:
        return unequipped_policy(obs)

    def act_batch(self, obs) -> np.ndarray:
        return np.full(len(obs), int(SpeedCommand.HOLD), dtype=int)


class QPolicy:
    """Epsilon-greedy over a Q-network; ``eps=0`` gives the deterministic greedy policy."""

    name = "ddqn"

    def __init__(self, net: MlpNetwork, eps: float = 0.0, rng: Optional[np.random.Generator] = None):
        self.net = net
        self.eps = eps
        self.rng = rng if rng is not None else np.random.default_rng(0)

    def act(self, obs) -> SpeedCommand:
        return SpeedCommand(int(self.act_batch(np.atleast_2d(obs))[0]))

    def act_batch(self, obs) -> np.ndarray:
        return act_epsilon_greedy_batch(self.net, obs, self.eps, self.rng)
