"""Frozen-policy evaluation against the unequipped baseline."""

from __future__ import annotations

from pathlib import Path
from typing import Optional

from ..metrics import EvalIteration, EvalReport, aggregate, write_events, write_report
from ..scenario import Scenario, generate_scenario, save_scenario
from .config import ExperimentConfig, save_config
from .policy_io import load_rollout_policy
from .rollout import RolloutTask, WorkerPool, worker_seed

EVAL_STREAM = 7


def run_evaluation(cfg: ExperimentConfig, checkpoint, n_iterations: Optional[int] = None,
                   scenario: Optional[Scenario] = None, pool: Optional[WorkerPool] = None,
                   write: bool = True) -> EvalReport:
    """Evaluate a checkpoint greedily and pair every iteration with an unequipped run.

    Both runs of an iteration share the scenario and reset seed, so the ratio
    compares the same traffic. With ``evaluation.randomize_scenario`` each
    iteration draws a fresh scenario from the generator; otherwise all
    iterations replay the configured one.
    """
    cfg.validate()
    n = n_iterations or cfg.evaluation.n_iterations
    kind, params = load_rollout_policy(checkpoint, cfg)
    usecase = cfg.usecase.params()
    base = scenario or generate_scenario(cfg.scenario, seed=cfg.seed)
    tasks = []
    for i in range(n):
        sc = base
        if cfg.evaluation.randomize_scenario:
            sc = generate_scenario(cfg.scenario, seed=worker_seed(cfg.seed, i, 0, stream=EVAL_STREAM))
        reset_seed = worker_seed(cfg.seed, i, 0, stream=EVAL_STREAM + 1)
        log = write and cfg.evaluation.write_trajectories and i == 0
        common = dict(scenario=sc, usecase=usecase, reset_seed=reset_seed, log_trajectory=log,
                      obs_dtype=str(params[0].dtype) if params else "float64")
        tasks.append(RolloutTask(policy=kind, params=params, eps=0.0, seed=reset_seed, **common))
        tasks.append(RolloutTask(policy="unequipped", **common))
    own_pool = pool is None
    pool = pool or WorkerPool(cfg.workers, cfg.backend)
    try:
        results = pool.map(tasks)
    finally:
        if own_pool:
            pool.close()
    iterations = [EvalIteration(results[2 * i].stats, results[2 * i + 1].stats) for i in range(n)]
    report = aggregate(iterations, policy=kind, checkpoint=str(checkpoint))
    if write:
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_config(cfg, out / "config.yaml")
        save_scenario(base, out / "eval_scenario.json")
        write_report(report, out / "report.json")
        write_events(results[0].events, out / "events.csv")
        write_events(results[1].events, out / "events_unequipped.csv")
        if results[0].trajectory is not None:
            (out / "trajectory_eval.csv").write_text(results[0].trajectory)
            (out / "trajectory_unequipped.csv").write_text(results[1].trajectory)
    return report
