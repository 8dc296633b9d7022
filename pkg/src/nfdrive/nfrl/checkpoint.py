"""Versioned checkpoint container for all named parameters."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from ..diffmath.params import ParamSet
from ..diffmath.tensor import DiffError

CHECKPOINT_VERSION = 1


class CheckpointError(Exception):
    pass


def config_hash(config: dict) -> str:
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def save_checkpoint(path, params: ParamSet, config: dict) -> None:
    arrays = {f"p:{n}": params[n].data for n in params.names()}
    groups = {n: params.group_of(n) for n in params.names()}
    meta = {"version": CHECKPOINT_VERSION, "config": config,
            "config_hash": config_hash(config), "groups": groups}
    np.savez(Path(path), __meta__=np.frombuffer(
        json.dumps(meta).encode(), dtype=np.uint8), **arrays)


def load_checkpoint(path, expected_config: dict | None = None):
    """Returns (ParamSet, config dict).  Fails on version or hash mismatch."""
    try:
        with np.load(Path(path)) as z:
            meta = json.loads(bytes(z["__meta__"]).decode())
            if meta.get("version") != CHECKPOINT_VERSION:
                raise CheckpointError(
                    f"checkpoint version {meta.get('version')} != {CHECKPOINT_VERSION}")
            if meta["config_hash"] != config_hash(meta["config"]):
                raise CheckpointError("checkpoint config hash mismatch")
            params = ParamSet()
            for key in z.files:
                if key.startswith("p:"):
                    name = key[2:]
                    params.add(name, z[key],
                               group=meta["groups"].get(name, "default"))
    except (OSError, ValueError, KeyError) as exc:
        raise CheckpointError(f"unreadable checkpoint: {exc}") from exc
    if expected_config is not None:
        if config_hash(expected_config) != meta["config_hash"]:
            raise CheckpointError("checkpoint was written with a different config")
    return params, meta["config"]
