"""Uniform experience replay."""

from __future__ import annotations

import threading

import numpy as np


class ReplayBuffer:
    """Ring buffer of (obs, action, reward, next_obs, done) transitions.

    Storage grows on demand up to ``capacity`` so a large nominal capacity
    costs nothing until it is used. Appends and sampling take a lock, so
    several producers may add concurrently.
    """

    def __init__(self, capacity: int, obs_dim: int, dtype=np.float32):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.obs_dim = int(obs_dim)
        self.dtype = np.dtype(dtype)
        self._alloc = 0
        self._pos = 0
        self._size = 0
        self.total_added = 0
        self._lock = threading.Lock()
        self._grow(min(self.capacity, 1024))

    def _grow(self, n: int):
        def extend(arr, shape, dtype):
            new = np.zeros((n,) + shape, dtype=dtype)
            if arr is not None:
                new[: self._alloc] = arr[: self._alloc]
            return new

        first = self._alloc == 0
        self.obs = extend(None if first else self.obs, (self.obs_dim,), self.dtype)
        self.next_obs = extend(None if first else self.next_obs, (self.obs_dim,), self.dtype)
        self.actions = extend(None if first else self.actions, (), np.int64)
        self.rewards = extend(None if first else self.rewards, (), np.float64)
        self.dones = extend(None if first else self.dones, (), np.bool_)
        self._alloc = n

    def __len__(self):
        return self._size

    def add(self, obs, action, reward, next_obs, done):
        self.add_batch(np.asarray(obs)[None], [action], [reward], np.asarray(next_obs)[None], [done])

    def add_batch(self, obs, actions, rewards, next_obs, dones):
        obs = np.asarray(obs)
        n = len(obs)
        with self._lock:
            for k in range(n):
                if self._pos >= self._alloc:
                    self._grow(min(self.capacity, max(2 * self._alloc, 1024)))
                i = self._pos
                self.obs[i] = obs[k]
                self.next_obs[i] = next_obs[k]
                self.actions[i] = actions[k]
                self.rewards[i] = rewards[k]
                self.dones[i] = dones[k]
                self._pos = (self._pos + 1) % self.capacity
                self._size = min(self._size + 1, self.capacity)
                self.total_added += 1

    def sample(self, batch_size: int, rng: np.random.Generator):
        """Uniform sample, without replacement inside one batch."""
        with self._lock:
            if batch_size > self._size:
                raise ValueError(f"cannot sample {batch_size} from {self._size} transitions")
            idx = rng.choice(self._size, size=batch_size, replace=False)
            return (self.obs[idx], self.actions[idx], self.rewards[idx], self.next_obs[idx], self.dones[idx])
