"""Policy checkpoints.

Layout: a numpy ``.npz`` archive holding ``param_0 .. param_{2L-1}`` (weights
then bias per layer, original dtype) and ``meta``, a JSON string with keys
``format``, ``version``, ``layer_sizes``, ``activation``, ``config_hash``,
``params_sha256`` and free-form ``extra``.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Optional

import numpy as np

from ..errors import CheckpointError
from .mlp import MlpNetwork

FORMAT = "corridor-gym-policy"
VERSION = "1"


def config_hash(config: dict) -> str:
    """Stable hash of the settings that fix the network's input/output contract."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def params_digest(params) -> str:
    h = hashlib.sha256()
    for p in params:
        a = np.ascontiguousarray(p)
        h.update(str(a.dtype).encode() + str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()


def save_policy(net: MlpNetwork, path, contract: Optional[dict] = None, extra: Optional[dict] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {
        "format": FORMAT,
        "version": VERSION,
        "layer_sizes": list(net.layer_sizes),
        "activation": net.activation,
        "config_hash": config_hash(contract or {"layer_sizes": list(net.layer_sizes)}),
        "params_sha256": params_digest(net.params),
        "extra": extra or {},
    }
    arrays = {f"param_{k}": p for k, p in enumerate(net.params)}
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(meta, sort_keys=True)), **arrays)
    return path


def read_meta(path) -> dict:
    try:
        with np.load(path, allow_pickle=False) as data:
            return json.loads(str(data["meta"]))
    except (OSError, KeyError, ValueError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc


def load_policy(path, expected_input_dim: Optional[int] = None, contract: Optional[dict] = None) -> MlpNetwork:
    """Load a network, checking format version, parameter integrity and (optionally) the contract hash."""
    try:
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(str(data["meta"]))
            n = sum(1 for k in data.files if k.startswith("param_"))
            params = [data[f"param_{k}"] for k in range(n)]
    except (OSError, KeyError, ValueError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if meta.get("format") != FORMAT or meta.get("version") != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint format/version "
                              f"{meta.get('format')!r}/{meta.get('version')!r}")
    if params_digest(params) != meta.get("params_sha256"):
        raise CheckpointError(f"{path}: parameter digest mismatch (file corrupt)")
    if contract is not None and config_hash(contract) != meta.get("config_hash"):
        raise CheckpointError(f"{path}: config hash mismatch; checkpoint was trained for a different setup")
    sizes = meta["layer_sizes"]
    if expected_input_dim is not None and sizes[0] != expected_input_dim:
        raise CheckpointError(f"{path}: network input dim {sizes[0]} != expected {expected_input_dim}")
    try:
        return MlpNetwork(sizes, meta["activation"], dtype=params[0].dtype, params=params)
    except ValueError as exc:
        raise CheckpointError(f"{path}: {exc}") from exc


def save_unequipped(path, contract: Optional[dict] = None, extra: Optional[dict] = None) -> Path:
    """Parameter-free checkpoint standing for the unequipped baseline."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {
        "format": FORMAT,
        "version": VERSION,
        "policy": "unequipped",
        "layer_sizes": None,
        "activation": None,
        "config_hash": config_hash(contract or {}),
        "params_sha256": params_digest([]),
        "extra": extra or {},
    }
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(meta, sort_keys=True)))
    return path
