"""Command line entry point: ``corridor-gym <subcommand> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from ..env import read_trajectory
from ..errors import CorridorGymError
from ..metrics import log_summary, write_events, write_report
from ..scenario import generate_scenario, save_scenario
from .config import load_config, save_config
from .evaluation import run_evaluation
from .protocol import serve_protocol
from .training import run_training

log = logging.getLogger("corridor_gym")


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", metavar="PATH", help="YAML experiment config")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="dotted-path override, repeatable (e.g. --set algorithm.gamma=0.95)")
    p.add_argument("--seed", type=int, help="overrides the config seed and CORRIDOR_GYM_SEED")
    p.add_argument("--out", metavar="DIR", help="output directory (overrides output_dir)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="corridor-gym", description="Corridor separation RL environment and harness")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("generate", help="generate a scenario file")
    _common(p)
    p = sub.add_parser("train", help="train a policy")
    _common(p)
    p = sub.add_parser("evaluate", help="evaluate a checkpoint against the unequipped baseline")
    _common(p)
    p.add_argument("--checkpoint", metavar="PATH", help="policy checkpoint (default: evaluation.checkpoint)")
    p.add_argument("--iterations", type=int, help="evaluation iterations (default: evaluation.n_iterations)")
    p = sub.add_parser("report", help="safety events and metrics from trajectory logs")
    _common(p)
    p.add_argument("--log", dest="logs", action="append", required=True, metavar="PATH",
                   help="trajectory log, repeatable")
    p = sub.add_parser("serve", help="serve the environment over the line-delimited JSON protocol")
    _common(p)
    p.add_argument("--port", type=int, default=5555)
    p.add_argument("--host", default="127.0.0.1")
    return parser


def _config(args):
    return load_config(args.config, args.overrides, seed=args.seed, output_dir=args.out)


def cmd_generate(args) -> int:
    cfg = _config(args)
    out = Path(cfg.output_dir)
    scenario = generate_scenario(cfg.scenario, seed=cfg.seed)
    path = save_scenario(scenario, out / "scenario.json")
    save_config(cfg, out / "config.yaml")
    print(f"wrote {path} ({len(scenario.flights)} flights, {len(scenario.routes)} routes)")
    return 0


def cmd_train(args) -> int:
    cfg = _config(args)
    res = run_training(cfg)
    last = res.records[-1]
    print(f"trained {len(res.records)} iterations; last mean reward {last.mean_reward:.4f}; "
          f"best iteration {res.best_iteration}; outputs in {res.output_dir}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    ckpt = args.checkpoint or cfg.evaluation.checkpoint
    if not ckpt:
        raise CorridorGymError("evaluate needs --checkpoint or evaluation.checkpoint")
    report = run_evaluation(cfg, ckpt, n_iterations=args.iterations)
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    return 0


def cmd_report(args) -> int:
    cfg = _config(args)
    u = cfg.usecase
    out = Path(cfg.output_dir)
    summaries = {}
    for path in args.logs:
        try:
            rows = read_trajectory(path)
        except OSError as exc:
            raise CorridorGymError(f"cannot read {path}: {exc}") from exc
        summary = log_summary(rows, thresholds=u.thresholds, hold_speed=u.hold_speed)
        stem = Path(path).stem
        write_events(summary.pop("events"), out / f"{stem}_events.csv")
        summaries[str(path)] = summary
    write_report(summaries, out / "log_report.json")
    print(json.dumps(summaries, indent=2, sort_keys=True))
    return 0


def cmd_serve(args) -> int:
    cfg = _config(args)
    print(f"serving on {args.host}:{args.port}", flush=True)
    try:
        serve_protocol(cfg, args.port, args.host, background=False)
    except KeyboardInterrupt:
        pass
    return 0


COMMANDS = {"generate": cmd_generate, "train": cmd_train, "evaluate": cmd_evaluate,
            "report": cmd_report, "serve": cmd_serve}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (CorridorGymError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
