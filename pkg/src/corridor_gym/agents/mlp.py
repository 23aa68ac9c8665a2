"""Fully connected Q-network with hand-written backprop, plus optimizers."""

from __future__ import annotations

from typing import List, Optional, Sequence, Tuple

import numpy as np

ACTIVATIONS = ("relu", "linear")


class MlpNetwork:
    """Rectified hidden layers and a linear output layer (one Q-value per action).

    ``params`` is a flat list ``[W0, b0, W1, b1, ...]`` with ``W`` shaped
    (fan_in, fan_out).
    """

    def __init__(self, layer_sizes: Sequence[int], activation: str = "relu",
                 rng: Optional[np.random.Generator] = None, dtype=np.float64,
                 params: Optional[List[np.ndarray]] = None):
        if len(layer_sizes) < 2:
            raise ValueError("need at least input and output sizes")
        if activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        self.layer_sizes = tuple(int(n) for n in layer_sizes)
        self.activation = activation
        self.dtype = np.dtype(dtype)
        if params is not None:
            self.params = [np.array(p, dtype=self.dtype) for p in params]
            self._check_shapes()
            return
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params = []
        n_layers = len(self.layer_sizes) - 1
        for k, (fan_in, fan_out) in enumerate(zip(self.layer_sizes, self.layer_sizes[1:])):
            if k < n_layers - 1:
                bound = np.sqrt(6.0 / fan_in)  # He uniform
            else:
                bound = np.sqrt(6.0 / (fan_in + fan_out))
            self.params.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(self.dtype))
            self.params.append(np.zeros(fan_out, dtype=self.dtype))

    def _check_shapes(self):
        expected = []
        for fan_in, fan_out in zip(self.layer_sizes, self.layer_sizes[1:]):
            expected += [(fan_in, fan_out), (fan_out,)]
        got = [p.shape for p in self.params]
        if got != expected:
            raise ValueError(f"parameter shapes {got} do not match layer sizes {self.layer_sizes}")

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_actions(self) -> int:
        return self.layer_sizes[-1]

    def copy(self) -> "MlpNetwork":
        return MlpNetwork(self.layer_sizes, self.activation, dtype=self.dtype,
                          params=[p.copy() for p in self.params])

    def load_from(self, other: "MlpNetwork") -> None:
        for dst, src in zip(self.params, other.params):
            dst[...] = src

    def forward(self, x) -> np.ndarray:
        a = np.asarray(x, dtype=self.dtype)
        n = len(self.params) // 2
        for k in range(n):
            a = a @ self.params[2 * k] + self.params[2 * k + 1]
            if k < n - 1 and self.activation == "relu":
                a = np.maximum(a, 0)
        return a

    __call__ = forward

    def forward_cache(self, x) -> Tuple[np.ndarray, list]:
        a = np.asarray(x, dtype=self.dtype)
        cache = []
        n = len(self.params) // 2
        for k in range(n):
            z = a @ self.params[2 * k] + self.params[2 * k + 1]
            cache.append((a, z))
            a = np.maximum(z, 0) if (k < n - 1 and self.activation == "relu") else z
        return a, cache

    def backward(self, cache: list, dout: np.ndarray) -> List[np.ndarray]:
        grads: List[np.ndarray] = [None] * len(self.params)
        n = len(cache)
        d = dout
        for k in reversed(range(n)):
            a_in, z = cache[k]
            if k < n - 1 and self.activation == "relu":
                d = d * (z > 0)
            grads[2 * k] = a_in.T @ d
            grads[2 * k + 1] = d.sum(axis=0)
            if k:
                d = d @ self.params[2 * k].T
        return grads

    def all_finite(self) -> bool:
        return all(np.isfinite(p).all() for p in self.params)


def td_loss_and_grads(net: MlpNetwork, obs, actions, targets):
    """Mean squared TD error over the batch and its parameter gradients."""
    q, cache = net.forward_cache(obs)
    idx = np.arange(q.shape[0])
    err = q[idx, actions] - np.asarray(targets, dtype=net.dtype)
    loss = float(np.mean(err.astype(np.float64) ** 2))
    dq = np.zeros_like(q)
    dq[idx, actions] = 2.0 * err / q.shape[0]
    return loss, net.backward(cache, dq)


def td_loss(net: MlpNetwork, obs, actions, targets) -> float:
    q = net.forward(obs)
    err = q[np.arange(q.shape[0]), actions] - targets
    return float(np.mean(np.asarray(err, dtype=np.float64) ** 2))


class Sgd:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params, grads):
        for p, g in zip(params, grads):
            p -= self.lr * g


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = None
        self.v = None

    def step(self, params, grads):
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= (self.lr / c1) * m / (np.sqrt(v / c2) + self.eps)


def make_optimizer(name: str, lr: float):
    if name == "sgd":
        return Sgd(lr)
    if name == "adam":
        return Adam(lr)
    raise ValueError(f"unknown optimizer {name!r}")


def gradient_check(net: MlpNetwork, batch, h: float = 1e-5, floor: float = 1e-8) -> float:
    """Largest relative error between backprop and central finite differences.

    ``batch`` is ``(obs, actions, targets)``. Relative error per parameter is
    ``|analytic - numeric| / max(|analytic|, |numeric|, floor)``; the floor keeps
    exactly-zero gradients from dividing by zero.
    """
    net = MlpNetwork(net.layer_sizes, net.activation, dtype=np.float64, params=net.params)
    obs, actions, targets = batch
    obs = np.asarray(obs, dtype=np.float64)
    actions = np.asarray(actions, dtype=int)
    targets = np.asarray(targets, dtype=np.float64)
    _, grads = td_loss_and_grads(net, obs, actions, targets)
    worst = 0.0
    for p, g in zip(net.params, grads):
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            up = td_loss(net, obs, actions, targets)
            flat[i] = old - h
            down = td_loss(net, obs, actions, targets)
            flat[i] = old
            numeric = (up - down) / (2.0 * h)
            denom = max(abs(gflat[i]), abs(numeric), floor)
            worst = max(worst, abs(gflat[i] - numeric) / denom)
    return worst
