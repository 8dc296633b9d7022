"""Run configuration: one flat record validated against legal ranges."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from ..simworld.maps import builtin_layouts

METHODS = ("NFRL", "NFRL+SC", "BC+Demo", "NFRL+SC+Demo")
SHAPINGS = ("f1", "f2")


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    map_id: str = "ring"
    n_traffic: int = 2
    seed: int = 5
    method: str = "NFRL+SC+Demo"
    shaping: str = ""               # empty = derived from method
    demo_path: str = ""

    # world model
    context_dim: int = 64
    stoch_dim: int = 16
    embed_dim: int = 64
    k_flows: int = 4
    enc_hidden: int = 64
    dec_hidden: int = 64
    reward_hidden: int = 32
    actor_hidden: int = 64
    critic_hidden: int = 64
    free_nats: float = 3.0

    # actor-critic
    horizon: int = 15
    gamma: float = 0.99
    lam: float = 0.95
    k: float = 1.5
    bc_epochs: int = 200

    # loop
    episodes: int = 60
    seed_episodes: int = 3
    update_every: int = 100
    updates_per_cycle: int = 1
    batch_size: int = 32
    seq_length: int = 50
    max_starts: int = 32
    buffer_capacity: int = 100
    max_episode_steps: int = 500

    model_lr: float = 1e-3
    actor_lr: float = 8e-5
    critic_lr: float = 8e-5
    bc_lr: float = 1e-3

    eval_episodes: int = 10
    eval_every: int = 0             # 0 = only at the end

    def __post_init__(self):
        if self.map_id not in builtin_layouts():
            raise ConfigError(f"unknown map {self.map_id!r}")
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}")
        if self.shaping == "":
            self.shaping = "f1" if self.method == "NFRL" else "f2"
        if self.shaping not in SHAPINGS:
            raise ConfigError(f"shaping must be one of {SHAPINGS}")
        if self.method in ("BC+Demo", "NFRL+SC+Demo") and not self.demo_path:
            raise ConfigError(f"method {self.method} requires demo_path")
        positive = ("context_dim", "stoch_dim", "embed_dim", "enc_hidden",
                    "dec_hidden", "reward_hidden", "actor_hidden",
                    "critic_hidden", "horizon", "episodes", "update_every",
                    "updates_per_cycle", "batch_size", "seq_length",
                    "max_starts", "buffer_capacity", "max_episode_steps",
                    "eval_episodes", "bc_epochs")
        for name in positive:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.k_flows < 0 or self.n_traffic < 0 or self.seed_episodes < 0:
            raise ConfigError("k_flows, n_traffic, seed_episodes must be >= 0")
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError("gamma must be in (0, 1]")
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError("lam must be in [0, 1]")
        if self.free_nats < 0.0 or self.k < 0.0:
            raise ConfigError("free_nats and k must be >= 0")
        for lr in ("model_lr", "actor_lr", "critic_lr", "bc_lr"):
            if getattr(self, lr) <= 0.0:
                raise ConfigError(f"{lr} must be > 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "RunConfig":
        unknown = set(d) - set(RunConfig.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return RunConfig(**d)

    @staticmethod
    def from_file(path) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"bad config file: {exc}") from exc
        return RunConfig.from_dict(data)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")
