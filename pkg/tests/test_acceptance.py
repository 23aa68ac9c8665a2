"""Acceptance criteria, one test each.

Every test records a PASS/FAIL line (see conftest.py) that pytest prints in
an "acceptance criteria" section at the end of the run, so failures are
reported with their measured values rather than hidden.
"""

import math
import time
from dataclasses import replace

import numpy as np
import pytest

from conftest import record_acceptance
from oracles import brute_force_events, constant_q_net, frames_to_rows, random_log, reward_oracle, small_net_and_batch

from corridor_gym.agents import ddqn_target, gradient_check
from corridor_gym.agents.ddqn import DdqnAgent
from corridor_gym.env import CorridorEnv, UseCaseParams, build_observation, reward_from_distance
from corridor_gym.harness import load_config, run_evaluation, run_training, serve_protocol
from corridor_gym.harness.policy_io import policy_contract, save_unequipped
from corridor_gym.agents.checkpoint import save_policy
from corridor_gym.harness.protocol import hold_client_trajectory
from corridor_gym.harness.rollout import RolloutTask, run_rollout
from corridor_gym.metrics import DEFAULT_THRESHOLDS, detect_events
from corridor_gym.scenario import generate_scenario
from corridor_gym.sim import SpeedCommand, remaining_distance, spawn

P = UseCaseParams()

LEARNING_OVERRIDES = [
    "scenario.preset=overtake",
    "algorithm.eps_decay_steps=20000",
    "algorithm.replay_capacity=50000",
    "algorithm.target_update_freq=1000",
    "algorithm.optimizer=adam",
    "algorithm.train_interval=4",
    "n_workers=4",
    "n_iterations=30",
    "wall_budget_s=840",
    "trajectory_logs=none",
]


def test_01_reward_oracle():
    rng = np.random.default_rng(2024)
    d = rng.uniform(0.0, 6000.0, size=10_000)
    d[:8] = [149.999, 150.0, 2999.999, 3000.0, 0.0, 1000.0, 5000.0, math.inf]
    actions = rng.integers(0, 3, size=d.size)
    t0 = time.perf_counter()
    got = [reward_from_distance(float(x), SpeedCommand(int(a)), P) for x, a in zip(d, actions)]
    elapsed = time.perf_counter() - t0
    worst = max(abs(g - reward_oracle(float(x), int(a))) for g, x, a in zip(got, d, actions))
    ok = worst <= 1e-12 and elapsed < 1.0
    record_acceptance(1, "reward oracle", ok, f"10000 samples, max |diff| {worst:.2e}, {elapsed:.3f}s")
    assert ok


def test_02_detector_equivalence():
    rng = np.random.default_rng(7)
    logs = [random_log(rng, n_aircraft=5, n_steps=500) for _ in range(100)]
    rows = [frames_to_rows(f) for f in logs]
    t0 = time.perf_counter()
    found = [detect_events(r) for r in rows]
    elapsed = time.perf_counter() - t0
    mismatches = 0
    n_events = 0
    for frames, ev in zip(logs, found):
        got = sorted((e.kind, e.id_a, e.id_b, e.onset_time, e.end_time) for e in ev)
        n_events += len(got)
        mismatches += got != brute_force_events(frames, DEFAULT_THRESHOLDS)
    ok = mismatches == 0 and elapsed < 10.0 and n_events > 0
    record_acceptance(2, "conflict-detection equivalence", ok,
                      f"100 logs, {n_events} events, {mismatches} mismatching logs, detector {elapsed:.2f}s")
    assert ok


def translated(s, dx, dy):
    t = replace(s, x=s.x + dx, y=s.y + dy, route=tuple((px + dx, py + dy) for px, py in s.route))
    t.dest_dist = remaining_distance(t)
    return t


def test_03_observation_contract():
    cfg = load_config(environ={})
    sc = generate_scenario(cfg.scenario, seed=0)
    env = CorridorEnv(sc, P)
    env.reset()
    for _ in range(600):
        env.step({})
    states = list(env.aircraft.values())
    # plus a dense cluster so the nearest-30 truncation is exercised
    rng = np.random.default_rng(3)
    for k in range(45):
        x, y = rng.uniform(-4000.0, 4000.0, size=2)
        states.append(spawn(f"X{k:02d}", ((x, y), (x + 2000.0, y + 1000.0), (x + 4000.0, y)),
                            float(rng.uniform(270.0, 430.0)), float(rng.uniform(0.0, 77.0))))
    worst_shift, bad_pad, bad_order, lengths, full = 0.0, 0, 0, set(), 0
    for own in states:
        others = [s for s in states if s.id != own.id]
        o = build_observation(own, others, P)
        lengths.add(len(o))
        n = o.valid_count
        full += int(n == P.n_intruders)
        bad_pad += int(np.any(o.intruders[n:] != 0.0))
        bad_order += int(np.any(np.diff(o.intruders[:n, 6]) < 0))
        moved = build_observation(translated(own, 1e4, 1e4), [translated(s, 1e4, 1e4) for s in others], P)
        worst_shift = max(worst_shift, float(np.max(np.abs(o.raw - moved.raw))))
    empty = build_observation(states[0], [], P)
    bad_pad += int(np.any(empty.raw[P.own_len:] != 0.0))
    ok = lengths == {339} and bad_pad == 0 and bad_order == 0 and worst_shift <= 1e-9 and full > 0
    record_acceptance(3, "observation contract", ok,
                      f"{len(states)} aircraft ({full} with 30 intruder blocks), lengths {sorted(lengths)}, padding errors {bad_pad}, "
                      f"ordering errors {bad_order}, max shift diff {worst_shift:.1e}")
    assert ok


def test_04_gradient_check():
    t0 = time.perf_counter()
    errs = [gradient_check(*small_net_and_batch(np.random.default_rng(100 + k))) for k in range(20)]
    elapsed = time.perf_counter() - t0
    ok = max(errs) < 1e-4 and elapsed < 30.0
    record_acceptance(4, "gradient check", ok, f"20 nets, max rel error {max(errs):.2e}, {elapsed:.2f}s")
    assert ok


def test_05_double_dqn_semantics():
    s = np.zeros(4)
    online, target = constant_q_net([1.0, 2.0, 3.0]), constant_q_net([0.5, 0.1, 0.2])
    cases = [
        (ddqn_target((s, 0, -0.001, s, False), online, target, 0.99), -0.001 + 0.99 * 0.2),
        (ddqn_target((s, 0, -1.0, s, True), online, target, 0.99), -1.0),
        (ddqn_target((s, 1, 0.25, s, False), online, target, 0.0), 0.25),
        # swapping which net picks and which evaluates changes the answer
        (ddqn_target((s, 0, 0.0, s, False), target, online, 0.5), 0.5 * 1.0),
    ]
    worst = max(abs(got - want) for got, want in cases)
    terminal_exact = cases[1][0] == -1.0
    ok = worst <= 1e-12 and terminal_exact
    record_acceptance(5, "double-DQN semantics", ok, f"{len(cases)} cases, max |diff| {worst:.1e}, "
                      f"terminal exact {terminal_exact}")
    assert ok


def test_06_desk_scale_learning(tmp_path):
    cfg = load_config(overrides=LEARNING_OVERRIDES, output_dir=str(tmp_path / "train"), environ={})
    t0 = time.perf_counter()
    res = run_training(cfg)
    train_s = time.perf_counter() - t0
    eval_cfg = load_config(overrides=LEARNING_OVERRIDES, output_dir=str(tmp_path / "eval"), environ={})
    rep = run_evaluation(eval_cfg, res.best_checkpoint, n_iterations=100)
    rr, lr = rep.risk_ratio_mean, rep.lowc_ratio_mean
    ok = (rep.n_iterations == 100 and rr is not None and lr is not None and rr < 1.0 and lr < 1.0
          and train_s < 900.0)
    record_acceptance(
        6, "desk-scale learning", ok,
        f"{len(res.records)} iterations in {train_s:.0f}s, best iteration {res.best_iteration}, "
        f"risk ratio {rr} +/- {rep.risk_ratio_std}, LoWC ratio {lr} +/- {rep.lowc_ratio_std} over "
        f"{rep.n_iterations} evaluation iterations (unequipped NMAC {rep.unequipped_nmac_counts[0]}, "
        f"LoWC {rep.unequipped_lowc_counts[0]})")
    assert ok


def test_07_ratio_identities(tmp_path):
    cfg = load_config(overrides=["scenario.preset=overtake", "n_workers=1"], output_dir=str(tmp_path / "u"),
                      environ={})
    base = run_evaluation(cfg, save_unequipped(tmp_path / "u.npz", policy_contract(cfg)), n_iterations=100)
    small = ["scenario.n_vertiports=8", "scenario.n_aircraft=20", "scenario.duration_s=300",
             "usecase.overrun_s=300", "n_workers=1"]
    cfg2 = load_config(overrides=small, output_dir=str(tmp_path / "g"), environ={})
    agent = DdqnAgent(cfg2.usecase.obs_len, cfg2.algorithm.ddqn(), seed=11)
    ck = save_policy(agent.online, tmp_path / "greedy.npz", policy_contract(cfg2))
    greedy = run_evaluation(cfg2, ck, n_iterations=20)
    ok = (base.risk_ratio_mean == 1.0 and base.risk_ratio_std == 0.0 and base.lowc_ratio_mean == 1.0
          and base.lowc_ratio_std == 0.0 and greedy.risk_ratio_defined and greedy.risk_ratio_std == 0.0
          and greedy.lowc_ratio_std == 0.0)
    record_acceptance(
        7, "ratio identities", ok,
        f"unequipped vs unequipped {base.risk_ratio_mean} +/- {base.risk_ratio_std} (100 iterations); "
        f"greedy DDQN {greedy.risk_ratio_mean:.4f} +/- {greedy.risk_ratio_std} (20 iterations)")
    assert ok


def test_08_throughput():
    cfg = load_config(environ={})
    sc = generate_scenario(cfg.scenario, seed=cfg.seed)
    assert len(sc.flights) == 100 and sc.duration == 1500.0
    r = run_rollout(RolloutTask(scenario=sc, usecase=cfg.usecase.params()))
    rate = r.stats.states / r.stats.wall_s
    ok = rate >= 24.0
    record_acceptance(8, "throughput", ok, f"{r.stats.states} aircraft-states in {r.stats.wall_s:.2f}s = "
                      f"{rate:.0f} states/s on one worker ({rate / 24.0:.0f}x the 24/s reference)")
    assert ok


def test_09_reproducibility(tmp_path):
    overrides = ["scenario.preset=overtake", "usecase.overrun_s=300", "n_workers=1", "n_iterations=4",
                 "algorithm.batch_size=64", "algorithm.eps_decay_steps=1500", "algorithm.target_update_freq=50",
                 "algorithm.optimizer=adam", "trajectory_logs=all"]
    first = run_training(load_config(overrides=overrides, output_dir=str(tmp_path / "a"), environ={}))
    snap = load_config(first.output_dir / "config.yaml", output_dir=str(tmp_path / "b"), environ={})
    second = run_training(snap)
    files = ["learning_curve.csv"] + [f"trajectories/iter_{k:04d}_w0.csv" for k in range(4)]
    same = [(first.output_dir / f).read_bytes() == (second.output_dir / f).read_bytes() for f in files]
    ok = all(same)
    record_acceptance(9, "reproducibility", ok, f"{sum(same)}/{len(files)} files bit-identical")
    assert ok


def test_10_protocol_fidelity():
    cfg = load_config(environ={})
    sc = generate_scenario(cfg.scenario, seed=cfg.seed)
    ref = run_rollout(RolloutTask(scenario=sc, usecase=cfg.usecase.params(), reset_seed=1, log_trajectory=True))
    srv = serve_protocol(cfg, 0, scenario=sc)
    try:
        remote = hold_client_trajectory(srv.port, seed=1)
    finally:
        srv.stop()
    ok = remote == ref.trajectory
    record_acceptance(10, "protocol fidelity", ok,
                      f"{len(ref.trajectory.splitlines()) - 1} log rows, bit-identical {ok}")
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
