import csv
import json

import numpy as np
import pytest
import yaml

from corridor_gym.errors import CheckpointError, ConfigError, TrainingAborted
from corridor_gym.harness import WorkerPool, load_config, run_evaluation, run_training, worker_seed
from corridor_gym.harness.config import SEED_ENV, dotted_keys
from corridor_gym.harness.policy_io import policy_contract, save_unequipped
from corridor_gym.harness.rollout import RolloutTask, run_rollout
from corridor_gym.scenario import generate_scenario

FAST = [
    "scenario.preset=overtake", "usecase.overrun_s=200", "algorithm.hidden_nodes=16", "algorithm.batch_size=32",
    "algorithm.eps_decay_steps=500", "algorithm.target_update_freq=20", "algorithm.train_interval=8",
]


def fast_cfg(tmp_path, *extra, name="run"):
    return load_config(overrides=FAST + list(extra), output_dir=str(tmp_path / name), environ={})


# ---- config


def test_defaults_resolve():
    cfg = load_config(environ={})
    assert cfg.usecase.obs_len == 339 and cfg.algorithm.gamma == 0.99 and cfg.workers == 4
    assert "algorithm.eps_decay_steps" in dotted_keys()


def test_override_order(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text(yaml.safe_dump({"seed": 1, "algorithm": {"gamma": 0.9}}))
    assert load_config(p, environ={}).seed == 1
    assert load_config(p, ["seed=2"], environ={}).seed == 2
    assert load_config(p, ["seed=2"], environ={SEED_ENV: "3"}).seed == 3
    assert load_config(p, ["seed=2"], seed=4, environ={SEED_ENV: "3"}).seed == 4
    cfg = load_config(p, ["algorithm.gamma=0.95"], environ={})
    assert cfg.algorithm.gamma == 0.95 and cfg.algorithm.batch_size == 512


def test_unknown_key_suggests_neighbours(tmp_path):
    with pytest.raises(ConfigError, match="algorithm.gamma"):
        load_config(overrides=["algorithm.gama=0.9"], environ={})
    p = tmp_path / "c.yaml"
    p.write_text("usecase:\n  d_nmc: 100\n")
    with pytest.raises(ConfigError, match="usecase.d_nmac"):
        load_config(p, environ={})


@pytest.mark.parametrize("item", ["algorithm.gamma=1.5", "algorithm.batch_size=abc", "n_workers=0",
                                  "usecase.remove_on_nmac=3", "backend=gpu", "usecase.d_lowc=10"])
def test_invalid_values(item):
    with pytest.raises(ConfigError):
        load_config(overrides=[item], environ={})


def test_bad_env_seed():
    with pytest.raises(ConfigError, match=SEED_ENV):
        load_config(environ={SEED_ENV: "abc"})


def test_worker_seeds_are_distinct_and_stable():
    seeds = {worker_seed(0, i, w, s) for i in range(20) for w in range(8) for s in range(3)}
    assert len(seeds) == 20 * 8 * 3
    assert worker_seed(5, 2, 1) == worker_seed(5, 2, 1)


# ---- training


def read_curve(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_training_bookkeeping(tmp_path):
    cfg = fast_cfg(tmp_path, "n_iterations=3", "n_workers=1", "trajectory_logs=all")
    res = run_training(cfg)
    out = res.output_dir
    rows = read_curve(out / "learning_curve.csv")
    assert len(rows) == len(res.records) == 3
    assert list(rows[0]) == ["iteration", "mean_reward", "norm_nmac", "states"]
    for rec in res.records:
        assert rec.mean_reward == float(np.mean(rec.worker_returns))
        assert rec.states > 0
    for k in range(3):
        assert (out / "checkpoints" / f"iter_{k:04d}.npz").exists()
        assert (out / "trajectories" / f"iter_{k:04d}_w0.csv").exists()
    assert (out / "checkpoints" / "best.npz").exists() and (out / "checkpoints" / "final.npz").exists()
    assert json.loads((out / "status.json").read_text())["state"] == "completed"
    snap = load_config(out / "config.yaml", environ={})
    assert snap == cfg
    assert len(read_curve(out / "timing.csv")) == 3


def test_mean_reward_is_mean_of_worker_returns(tmp_path):
    cfg = fast_cfg(tmp_path, "n_iterations=2", "n_workers=3", "backend=thread", "trajectory_logs=none")
    res = run_training(cfg)
    for rec in res.records:
        assert len(rec.worker_returns) == 3
        assert rec.mean_reward == float(np.mean(rec.worker_returns))


def test_scheduling_does_not_change_results(tmp_path):
    curves = []
    for backend in ("serial", "thread", "process"):
        cfg = fast_cfg(tmp_path, "n_iterations=2", "n_workers=2", f"backend={backend}", name=backend)
        run_training(cfg)
        curves.append((tmp_path / backend / "learning_curve.csv").read_text())
    assert curves[0] == curves[1] == curves[2]


def test_worker_returns_do_not_depend_on_worker_count(tmp_path):
    # first iteration: every worker uses the initial policy, so worker k's
    # episode must be the same whether 1 or 3 workers exist
    one = run_training(fast_cfg(tmp_path, "n_iterations=1", "n_workers=1", name="one"))
    three = run_training(fast_cfg(tmp_path, "n_iterations=1", "n_workers=3", "backend=serial", name="three"))
    assert one.records[0].worker_returns[0] == three.records[0].worker_returns[0]


def test_worker_failure_aborts_with_partial_outputs(tmp_path):
    cfg = fast_cfg(tmp_path, "n_iterations=4", "n_workers=1")
    with pytest.raises(TrainingAborted, match="iteration 1"):
        run_training(cfg, inject_failure_at=1)
    status = json.loads((tmp_path / "run" / "status.json").read_text())
    assert status["state"] == "failed" and status["failed_iteration"] == 1
    assert len(read_curve(tmp_path / "run" / "learning_curve.csv")) == 1
    assert (tmp_path / "run" / "checkpoints" / "iter_0000.npz").exists()


def test_wall_budget_stops_early(tmp_path):
    cfg = fast_cfg(tmp_path, "n_iterations=50", "n_workers=1", "wall_budget_s=0.01")
    res = run_training(cfg)
    assert len(res.records) == 1


def test_unequipped_training_run(tmp_path):
    cfg = fast_cfg(tmp_path, "n_iterations=2", "n_workers=1", "algorithm.name=unequipped")
    res = run_training(cfg)
    assert res.agent is None and res.records[0].mean_reward == res.records[1].mean_reward


# ---- evaluation


def test_unequipped_vs_unequipped_is_exactly_one(tmp_path):
    cfg = load_config(overrides=["scenario.preset=overtake", "n_workers=1"], output_dir=str(tmp_path), environ={})
    ck = save_unequipped(tmp_path / "u.npz", policy_contract(cfg))
    rep = run_evaluation(cfg, ck, n_iterations=5)
    assert rep.risk_ratio_mean == 1.0 and rep.risk_ratio_std == 0.0
    assert rep.lowc_ratio_mean == 1.0 and rep.lowc_ratio_std == 0.0
    assert rep.alert_rate == 0.0
    assert rep.nmac_counts == [1] * 5 and rep.lowc_counts == [1] * 5
    for name in ("report.json", "events.csv", "events_unequipped.csv", "config.yaml", "trajectory_eval.csv"):
        assert (tmp_path / name).exists()
    assert (tmp_path / "trajectory_eval.csv").read_text() == (tmp_path / "trajectory_unequipped.csv").read_text()


def test_undefined_ratio_is_flagged(tmp_path):
    cfg = load_config(overrides=["scenario.preset=overtake", "n_workers=1", "usecase.d_nmac=1",
                                 "usecase.d_lowc=2"], output_dir=str(tmp_path), environ={})
    ck = save_unequipped(tmp_path / "u.npz", policy_contract(cfg))
    rep = run_evaluation(cfg, ck, n_iterations=2)
    assert not rep.risk_ratio_defined and rep.risk_ratio_undefined_iterations == 2
    assert json.loads((tmp_path / "report.json").read_text())["risk_ratio_defined"] is False


def test_checkpoint_from_other_setup_is_rejected(tmp_path):
    cfg = fast_cfg(tmp_path, "n_iterations=1", "n_workers=1")
    res = run_training(cfg)
    other = load_config(overrides=FAST + ["usecase.n_intruders=5"], environ={})
    with pytest.raises(CheckpointError):
        run_evaluation(other, res.output_dir / "checkpoints" / "final.npz", n_iterations=1, write=False)


def test_greedy_evaluation_is_deterministic(tmp_path):
    cfg = fast_cfg(tmp_path, "n_iterations=1", "n_workers=1")
    res = run_training(cfg)
    rep = run_evaluation(cfg, res.output_dir / "checkpoints" / "final.npz", n_iterations=4, write=False)
    assert len(set(rep.nmac_counts)) == 1 and len(set(rep.lowc_counts)) == 1


def test_rollout_states_count_active_aircraft():
    cfg = load_config(overrides=["scenario.preset=overtake"], environ={})
    sc = generate_scenario(cfg.scenario, seed=0)
    r = run_rollout(RolloutTask(scenario=sc, usecase=cfg.usecase.params(), log_trajectory=True))
    rows = r.trajectory.splitlines()[1:]
    acted = sum(1 for line in rows if line.split(",")[8] != "")
    assert r.stats.states == acted == r.stats.decisions


def test_pool_backends_agree():
    cfg = load_config(overrides=["scenario.preset=overtake"], environ={})
    sc = generate_scenario(cfg.scenario, seed=0)
    tasks = [RolloutTask(scenario=sc, usecase=cfg.usecase.params(), reset_seed=k) for k in range(2)]
    with WorkerPool(2, "process") as pool:
        a = [r.stats for r in pool.map(tasks)]
    with WorkerPool(1, "serial") as pool:
        b = [r.stats for r in pool.map(tasks)]
    for x, y in zip(a, b):
        x.wall_s = y.wall_s = 0.0
    assert a == b
