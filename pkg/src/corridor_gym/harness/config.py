"""Hierarchical experiment configuration.

Defaults live in dataclasses; a YAML file, ``--set a.b=value`` overrides, the
``CORRIDOR_GYM_SEED`` environment variable and ``--seed`` are layered on top
in that order. Every key is type checked and unknown keys are rejected with
the closest valid suggestions.
"""

from __future__ import annotations

import dataclasses
import difflib
import os
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import yaml

from ..agents.ddqn import DdqnConfig
from ..env import UseCaseParams
from ..errors import ConfigError
from ..scenario import ScenarioParams

SEED_ENV = "CORRIDOR_GYM_SEED"
USECASES = ("corridor_separation",)
ALGORITHMS = ("ddqn", "unequipped")


@dataclass
class UseCaseSection(UseCaseParams):
    name: str = "corridor_separation"

    def params(self) -> UseCaseParams:
        kw = {f.name: getattr(self, f.name) for f in dataclasses.fields(UseCaseParams)}
        return UseCaseParams(**kw)


@dataclass
class AlgorithmSection(DdqnConfig):
    name: str = "ddqn"

    def ddqn(self) -> DdqnConfig:
        kw = {f.name: getattr(self, f.name) for f in dataclasses.fields(DdqnConfig)}
        return DdqnConfig(**kw)


@dataclass
class EvaluationSection:
    n_iterations: int = 100
    checkpoint: Optional[str] = None
    randomize_scenario: bool = False
    write_trajectories: bool = True


@dataclass
class ExperimentConfig:
    seed: int = 0
    n_iterations: int = 100
    n_workers: Optional[int] = 4  # None: use algorithm.n_workers
    output_dir: str = "runs/default"
    backend: str = "auto"  # auto | serial | thread | process
    wall_budget_s: Optional[float] = None
    rolling_window: int = 25
    trajectory_logs: str = "final"  # none | final | all
    scenario_per_worker: bool = False
    usecase: UseCaseSection = field(default_factory=UseCaseSection)
    algorithm: AlgorithmSection = field(default_factory=AlgorithmSection)
    scenario: ScenarioParams = field(default_factory=ScenarioParams)
    evaluation: EvaluationSection = field(default_factory=EvaluationSection)

    @property
    def workers(self) -> int:
        return self.n_workers if self.n_workers is not None else self.algorithm.n_workers

    def validate(self) -> "ExperimentConfig":
        if self.usecase.name not in USECASES:
            raise ConfigError(f"usecase.name must be one of {USECASES}, got {self.usecase.name!r}")
        if self.algorithm.name not in ALGORITHMS:
            raise ConfigError(f"algorithm.name must be one of {ALGORITHMS}, got {self.algorithm.name!r}")
        if self.n_iterations < 1:
            raise ConfigError("n_iterations must be at least 1")
        if self.workers < 1:
            raise ConfigError("n_workers must be at least 1")
        if self.backend not in ("auto", "serial", "thread", "process"):
            raise ConfigError(f"backend must be auto, serial, thread or process, got {self.backend!r}")
        if self.trajectory_logs not in ("none", "final", "all"):
            raise ConfigError(f"trajectory_logs must be none, final or all, got {self.trajectory_logs!r}")
        if self.rolling_window < 1:
            raise ConfigError("rolling_window must be at least 1")
        if self.wall_budget_s is not None and self.wall_budget_s <= 0:
            raise ConfigError("wall_budget_s must be positive")
        if self.evaluation.n_iterations < 1:
            raise ConfigError("evaluation.n_iterations must be at least 1")
        self.usecase.validate()
        self.algorithm.validate()
        self.scenario.validate()
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


# --------------------------------------------------------------------------
# typed dict <-> dataclass


def dotted_keys(cls=ExperimentConfig, prefix: str = "") -> List[str]:
    out = []
    hints = typing.get_type_hints(cls)
    for f in dataclasses.fields(cls):
        key = prefix + f.name
        if dataclasses.is_dataclass(hints[f.name]):
            out += dotted_keys(hints[f.name], key + ".")
        else:
            out.append(key)
    return out


def _unknown_key(key: str) -> ConfigError:
    near = difflib.get_close_matches(key, dotted_keys(), n=3, cutoff=0.5)
    if not near:
        leaf = key.rsplit(".", 1)[-1]
        near = [k for k in dotted_keys() if k.rsplit(".", 1)[-1] == leaf][:3]
    hint = f"; did you mean {', '.join(near)}?" if near else ""
    return ConfigError(f"unknown config key {key!r}{hint}")


def _coerce(value: Any, tp, key: str):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin is typing.Union:
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _coerce(value, inner[0], key)
    if origin in (list, List, Sequence):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{key}: expected a list, got {value!r}")
        return [_coerce(v, args[0] if args else Any, f"{key}[{i}]") for i, v in enumerate(value)]
    if tp is Any:
        return value
    if tp is bool:
        if isinstance(value, bool):
            return value
        raise ConfigError(f"{key}: expected true/false, got {value!r}")
    if tp is int:
        if isinstance(value, int) and not isinstance(value, bool):
            return value
        if isinstance(value, float) and value.is_integer():
            return int(value)
        raise ConfigError(f"{key}: expected an integer, got {value!r}")
    if tp is float:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        raise ConfigError(f"{key}: expected a number, got {value!r}")
    if tp is str:
        if isinstance(value, str):
            return value
        raise ConfigError(f"{key}: expected a string, got {value!r}")
    raise ConfigError(f"{key}: unsupported type {tp}")


def from_dict(data: dict, cls=ExperimentConfig, prefix: str = ""):
    if not isinstance(data, dict):
        raise ConfigError(f"{prefix.rstrip('.') or 'config'}: expected a mapping")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            raise _unknown_key(prefix + str(key))
    kw = {}
    for name, value in data.items():
        tp = hints[name]
        if dataclasses.is_dataclass(tp):
            kw[name] = from_dict(value or {}, tp, prefix + name + ".")
        else:
            kw[name] = _coerce(value, tp, prefix + name)
    return cls(**kw)


def set_dotted(tree: dict, key: str, value: Any) -> None:
    if key not in dotted_keys():
        raise _unknown_key(key)
    parts = key.split(".")
    node = tree
    for p in parts[:-1]:
        node = node.setdefault(p, {})
    node[parts[-1]] = value


def parse_override(text: str):
    if "=" not in text:
        raise ConfigError(f"override {text!r} must look like key=value")
    key, raw = text.split("=", 1)
    try:
        value = yaml.safe_load(raw) if raw.strip() else None
    except yaml.YAMLError as exc:
        raise ConfigError(f"override {key}: cannot parse value {raw!r}") from exc
    return key.strip(), value


def _merge(base: dict, top: dict, prefix: str = "") -> dict:
    out = dict(base)
    for k, v in top.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v, f"{prefix}{k}.")
        else:
            out[k] = v
    return out


def load_config(path: Optional[str] = None, overrides: Sequence[str] = (), seed: Optional[int] = None,
                output_dir: Optional[str] = None, environ: Optional[dict] = None) -> ExperimentConfig:
    tree = ExperimentConfig().to_dict()
    if path:
        try:
            doc = yaml.safe_load(Path(path).read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        from_dict(_merge(ExperimentConfig().to_dict(), doc))  # reject unknown keys early
        tree = _merge(tree, doc)
    for item in overrides:
        key, value = parse_override(item)
        set_dotted(tree, key, value)
    env = os.environ if environ is None else environ
    if env.get(SEED_ENV):
        try:
            tree["seed"] = int(env[SEED_ENV])
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env[SEED_ENV]!r}") from exc
    if seed is not None:
        tree["seed"] = seed
    if output_dir is not None:
        tree["output_dir"] = output_dir
    cfg = from_dict(tree)
    if cfg.n_workers is None:
        cfg.n_workers = cfg.algorithm.n_workers
    return cfg.validate()


def save_config(cfg: ExperimentConfig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=True))
    return path
