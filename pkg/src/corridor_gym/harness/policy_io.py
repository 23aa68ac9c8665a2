"""Glue between experiment configs and policy checkpoints."""

from __future__ import annotations

from typing import Optional, Tuple

from ..agents.checkpoint import load_policy, read_meta, save_unequipped  # noqa: F401  (re-export)
from ..errors import CheckpointError
from .config import ExperimentConfig


def policy_contract(cfg: ExperimentConfig) -> dict:
    """Everything a checkpoint must agree on to be usable with ``cfg``'s observations."""
    u = cfg.usecase
    return {
        "obs_len": u.obs_len,
        "n_wpt": u.n_wpt,
        "n_intruders": u.n_intruders,
        "d_max": u.d_max,
        "speed_scale": u.speed_scale,
        "altitude_scale": u.altitude_scale,
        "hidden_nodes": cfg.algorithm.hidden_nodes,
        "hidden_layers": cfg.algorithm.hidden_layers,
    }


def load_rollout_policy(path, cfg: Optional[ExperimentConfig] = None) -> Tuple[str, Optional[tuple]]:
    """Return ``("unequipped", None)`` or ``("ddqn", params)`` for a checkpoint file."""
    meta = read_meta(path)
    contract = policy_contract(cfg) if cfg is not None else None
    if meta.get("policy") == "unequipped":
        if contract is not None:
            from ..agents.checkpoint import config_hash
            if config_hash(contract) != meta.get("config_hash"):
                raise CheckpointError(f"{path}: config hash mismatch")
        return "unequipped", None
    net = load_policy(path, cfg.usecase.obs_len if cfg is not None else None, contract)
    return "ddqn", tuple(net.params)
