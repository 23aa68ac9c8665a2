"""Training loop: parallel rollouts with a policy snapshot, then learner updates.

One iteration is one full scenario episode per worker. Outputs in
``output_dir``:

- ``config.yaml``: fully resolved configuration
- ``scenario.json``: the training scenario
- ``learning_curve.csv``: iteration, mean_reward, norm_nmac, states
- ``timing.csv``: iteration, wall_s, states, states_per_s (wall clock, not reproducible)
- ``checkpoints/iter_NNNN.npz`` (policy used for that iteration's rollouts),
  ``checkpoints/best.npz`` and ``checkpoints/final.npz``
- ``trajectories/iter_NNNN_wK.csv`` according to ``trajectory_logs``
- ``status.json``: completion state, failed iteration if any
"""

from __future__ import annotations

import csv
import json
import logging
import shutil
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from ..agents.checkpoint import save_policy
from ..agents.ddqn import DdqnAgent, network_from_params
from ..env import UseCaseParams
from ..errors import TrainingAborted
from ..scenario import Scenario, generate_scenario, save_scenario
from .config import ExperimentConfig, save_config
from .policy_io import policy_contract, save_unequipped
from .rollout import RolloutTask, WorkerPool, worker_seed

log = logging.getLogger(__name__)

CURVE_COLUMNS = ("iteration", "mean_reward", "norm_nmac", "states")
TIMING_COLUMNS = ("iteration", "wall_s", "states", "states_per_s")


@dataclass
class IterationRecord:
    iteration: int
    mean_reward: float
    norm_nmac: float
    wall_s: float
    states: int
    worker_returns: List[float] = field(default_factory=list)
    losses: int = 0
    epsilon: float = 0.0

    @property
    def states_per_s(self) -> float:
        return self.states / self.wall_s if self.wall_s > 0 else 0.0


@dataclass
class TrainingResult:
    output_dir: Path
    records: List[IterationRecord]
    best_iteration: Optional[int]
    best_checkpoint: Optional[Path]
    learning_curve: Path
    agent: Optional[DdqnAgent] = None


def rolling_means(values: Sequence[float], window: int) -> List[float]:
    out = []
    for i in range(len(values)):
        chunk = values[max(0, i - window + 1): i + 1]
        out.append(float(np.mean(chunk)))
    return out


def best_iteration(rewards: Sequence[float], window: int = 25) -> int:
    """Index with the highest trailing rolling-mean reward (earliest on ties)."""
    if not len(rewards):
        raise ValueError("no rewards")
    return int(np.argmax(rolling_means(rewards, window)))


def worker_scenario(cfg: ExperimentConfig, base: Scenario, iteration: int, worker: int) -> Scenario:
    if not cfg.scenario_per_worker:
        return base
    return generate_scenario(cfg.scenario, seed=worker_seed(cfg.seed, iteration, worker, stream=2))


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def run_training(cfg: ExperimentConfig, pool: Optional[WorkerPool] = None, *,
                 inject_failure_at: Optional[int] = None) -> TrainingResult:
    cfg.validate()
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_config(cfg, out / "config.yaml")
    scenario = generate_scenario(cfg.scenario, seed=cfg.seed)
    save_scenario(scenario, out / "scenario.json")
    usecase: UseCaseParams = cfg.usecase.params()
    learning = cfg.algorithm.name == "ddqn"
    agent = DdqnAgent(usecase.obs_len, cfg.algorithm.ddqn(), seed=cfg.seed) if learning else None
    contract = policy_contract(cfg)
    ckpt_dir = out / "checkpoints"
    ckpt_dir.mkdir(exist_ok=True)
    traj_dir = out / "trajectories"
    status_path = out / "status.json"
    curve_path, timing_path = out / "learning_curve.csv", out / "timing.csv"
    curve_fh = open(curve_path, "w", newline="")
    timing_fh = open(timing_path, "w", newline="")
    curve, timing = csv.writer(curve_fh, lineterminator="\n"), csv.writer(timing_fh, lineterminator="\n")
    curve.writerow(CURVE_COLUMNS)
    timing.writerow(TIMING_COLUMNS)

    own_pool = pool is None
    pool = pool or WorkerPool(cfg.workers, cfg.backend)
    records: List[IterationRecord] = []
    best_idx, best_path = None, None
    started = time.perf_counter()
    status = {"state": "running", "completed_iterations": 0}
    try:
        for it in range(cfg.n_iterations):
            t0 = time.perf_counter()
            eps = agent.epsilon if learning else 0.0
            snapshot = agent.snapshot() if learning else None
            log_this = cfg.trajectory_logs == "all" or (
                cfg.trajectory_logs == "final" and it == cfg.n_iterations - 1)
            tasks = [RolloutTask(
                scenario=worker_scenario(cfg, scenario, it, w), usecase=usecase,
                policy="ddqn" if learning else "unequipped", params=snapshot, eps=eps,
                seed=worker_seed(cfg.seed, it, w), reset_seed=worker_seed(cfg.seed, it, w, stream=1),
                collect=learning, log_trajectory=log_this, obs_dtype=cfg.algorithm.dtype,
                fail=(it == inject_failure_at),
            ) for w in range(cfg.workers)]
            try:
                results = pool.map(tasks)
            except Exception as exc:
                status = {"state": "failed", "failed_iteration": it, "completed_iterations": it,
                          "error": f"{type(exc).__name__}: {exc}"}
                raise TrainingAborted(f"worker failed in iteration {it}: {exc}") from exc
            n_losses = 0
            if learning:
                for r in results:
                    agent.observe(*r.transitions)
                n_losses = len(agent.train_owed())
            returns = [r.stats.mean_return for r in results]
            rec = IterationRecord(
                iteration=it,
                mean_reward=float(np.mean(returns)),
                norm_nmac=float(np.mean([r.stats.normalized_nmac for r in results])),
                wall_s=time.perf_counter() - t0,
                states=int(sum(r.stats.states for r in results)),
                worker_returns=returns, losses=n_losses, epsilon=eps,
            )
            records.append(rec)
            curve.writerow([rec.iteration, _fmt(rec.mean_reward), _fmt(rec.norm_nmac), rec.states])
            timing.writerow([rec.iteration, f"{rec.wall_s:.6f}", rec.states, f"{rec.states_per_s:.3f}"])
            curve_fh.flush()
            timing_fh.flush()
            if log_this:
                traj_dir.mkdir(exist_ok=True)
                for w, r in enumerate(results):
                    (traj_dir / f"iter_{it:04d}_w{w}.csv").write_text(r.trajectory)
            path = ckpt_dir / f"iter_{it:04d}.npz"
            extra = {"iteration": it, "mean_reward": rec.mean_reward}
            if learning:
                # the snapshot is the policy that earned this iteration's reward
                save_policy(network_from_params(snapshot), path, contract, extra)
            else:
                save_unequipped(path, contract, extra)
            new_best = best_iteration([r.mean_reward for r in records], cfg.rolling_window)
            if new_best != best_idx:
                best_idx = new_best
                best_path = ckpt_dir / "best.npz"
                shutil.copyfile(ckpt_dir / f"iter_{best_idx:04d}.npz", best_path)
            status = {"state": "running", "completed_iterations": it + 1, "best_iteration": best_idx}
            log.info("iter %d reward %.4f nmac/ac %.4f eps %.4f states %d (%.1fs)", it, rec.mean_reward,
                     rec.norm_nmac, eps, rec.states, rec.wall_s)
            if cfg.wall_budget_s is not None and time.perf_counter() - started > cfg.wall_budget_s:
                break
        if learning:
            save_policy(agent.online, ckpt_dir / "final.npz", contract, {"iteration": len(records)})
        status = {"state": "completed", "completed_iterations": len(records), "best_iteration": best_idx}
    finally:
        curve_fh.close()
        timing_fh.close()
        status_path.write_text(json.dumps(status, indent=2, sort_keys=True) + "\n")
        if own_pool:
            pool.close()
    return TrainingResult(out, records, best_idx, best_path, curve_path, agent)
