"""Rollout workers.

A worker owns one environment and one read-only policy snapshot, plays one
full episode and returns statistics plus (optionally) its transitions. Tasks
carry everything the worker needs, so results do not depend on which
process or thread runs them or in what order.
"""

from __future__ import annotations

import io
import time
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..agents.ddqn import network_from_params
from ..agents.policies import QPolicy, UnequippedPolicy
from ..env import CorridorEnv, TrajectoryWriter, UseCaseParams
from ..metrics import EpisodeStats, SafetyEvent
from ..scenario import Scenario


def worker_seed(base: int, iteration: int, worker: int, stream: int = 0) -> int:
    """Seed for one (iteration, worker) pair; independent of how many workers exist."""
    return int(np.random.SeedSequence([base, stream, iteration, worker]).generate_state(1)[0])


@dataclass
class RolloutTask:
    scenario: Scenario
    usecase: UseCaseParams
    policy: str = "unequipped"  # unequipped | ddqn
    params: Optional[Tuple[np.ndarray, ...]] = None
    eps: float = 0.0
    seed: int = 0
    reset_seed: Optional[int] = None
    collect: bool = False
    log_trajectory: bool = False
    obs_dtype: str = "float32"
    fail: bool = False  # test hook: raise inside the worker


@dataclass
class RolloutResult:
    stats: EpisodeStats
    returns: dict
    events: List[SafetyEvent]
    transitions: Optional[tuple] = None
    trajectory: Optional[str] = None
    steps: int = 0
    extra: dict = field(default_factory=dict)


class WorkerError(RuntimeError):
    pass


def make_policy(task: RolloutTask):
    if task.policy == "unequipped":
        return UnequippedPolicy()
    net = network_from_params(task.params)
    return QPolicy(net, task.eps, np.random.default_rng(task.seed))


def run_rollout(task: RolloutTask) -> RolloutResult:
    """Play one episode to completion."""
    if task.fail:
        raise WorkerError("injected worker failure")
    t0 = time.perf_counter()
    env = CorridorEnv(task.scenario, task.usecase)
    policy = make_policy(task)
    res = env.reset(seed=task.reset_seed)
    buf = io.StringIO() if task.log_trajectory else None
    writer = TrajectoryWriter(buf) if buf is not None else None
    if writer:
        writer.write(res)
    dtype = np.dtype(task.obs_dtype)
    pending = {aid: o.scaled for aid, o in res.observations.items()}
    obs_l, act_l, rew_l, nxt_l, done_l = [], [], [], [], []
    while not res.done:
        ids = sorted(env.aircraft)
        actions = {}
        if ids:
            x = np.stack([pending[aid] for aid in ids]).astype(dtype)
            acts = policy.act_batch(x)
            actions = {aid: int(a) for aid, a in zip(ids, acts)}
        res = env.step(actions)
        if writer:
            writer.write(res)
        if task.collect and ids:
            obs_l.append(x)
            act_l.append(np.fromiter((actions[a] for a in ids), dtype=np.int64, count=len(ids)))
            rew_l.append(np.fromiter((res.rewards[a] for a in ids), dtype=np.float64, count=len(ids)))
            nxt_l.append(np.stack([res.observations[a].scaled for a in ids]).astype(dtype))
            done_l.append(np.fromiter((res.dones[a] for a in ids), dtype=bool, count=len(ids)))
        pending = {aid: o.scaled for aid, o in res.observations.items() if not res.dones[aid]}
    transitions = None
    if task.collect:
        if obs_l:
            transitions = tuple(np.concatenate(c) for c in (obs_l, act_l, rew_l, nxt_l, done_l))
        else:
            d = task.usecase.obs_len
            transitions = (np.zeros((0, d), dtype), np.zeros(0, np.int64), np.zeros(0),
                           np.zeros((0, d), dtype), np.zeros(0, bool))
    stats = env.episode_stats(wall_s=time.perf_counter() - t0)
    return RolloutResult(stats, dict(env.returns), env.safety_events(), transitions,
                         buf.getvalue() if buf is not None else None, env.step_count,
                         {"truncated": res.truncated, "arrived": len(env.arrived), "removed": len(env.removed)})


class WorkerPool:
    """Maps rollout tasks over a serial loop, threads or processes; results keep task order."""

    def __init__(self, n_workers: int, backend: str = "auto"):
        if backend == "auto":
            backend = "serial" if n_workers == 1 else "process"
        self.backend = backend
        self.n_workers = n_workers
        self._ex = None
        if backend == "process":
            self._ex = ProcessPoolExecutor(max_workers=n_workers)
        elif backend == "thread":
            self._ex = ThreadPoolExecutor(max_workers=n_workers)

    def map(self, tasks: Sequence[RolloutTask]) -> List[RolloutResult]:
        if self._ex is None:
            return [run_rollout(t) for t in tasks]
        futures = [self._ex.submit(run_rollout, t) for t in tasks]
        return [f.result() for f in futures]

    def close(self):
        if self._ex is not None:
            self._ex.shutdown(wait=True, cancel_futures=True)
            self._ex = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
