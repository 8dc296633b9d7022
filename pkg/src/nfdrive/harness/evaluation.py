"""Evaluation: mean-action rollouts, safe-driving-distance reports."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..diffmath.params import ParamSet
from ..nfrl.checkpoint import CheckpointError, load_checkpoint
from ..safety import TtcThresholds
from ..simworld.expert import ScriptedExpert
from ..simworld.world import OBS_DIM, spawn_scenario
from .config import RunConfig
from .metrics import BASELINES, compute_asd_msd
from .training import (EpisodeResult, run_policy_episode, world_model_config)


@dataclass
class EvalReport:
    asd: float
    msd: float
    per_episode: list[float]
    terminations: dict[str, int]
    episodes_to_baseline: dict[str, int | None] = field(default_factory=dict)
    wall_clock_to_baseline: dict[str, float | None] = field(default_factory=dict)

    def __post_init__(self):
        if not self.per_episode:
            raise ValueError("report needs at least one episode")
        if abs(self.msd - max(self.per_episode)) > 1e-12:
            raise ValueError("MSD must equal the max per-episode distance")
        if abs(self.asd - float(np.mean(self.per_episode))) > 1e-9:
            raise ValueError("ASD must equal the mean per-episode distance")
        if self.asd < 0.0:
            raise ValueError("distances must be non-negative")

    def to_dict(self) -> dict:
        return {"asd": self.asd, "msd": self.msd,
                "per_episode": self.per_episode,
                "terminations": self.terminations,
                "episodes_to_baseline": self.episodes_to_baseline,
                "wall_clock_to_baseline": self.wall_clock_to_baseline}


def report_from_episodes(results: list[EpisodeResult]) -> EvalReport:
    asd, msd, dists = compute_asd_msd([r.speeds for r in results])
    terminations: dict[str, int] = {}
    for r in results:
        terminations[r.termination] = terminations.get(r.termination, 0) + 1
    return EvalReport(asd=asd, msd=msd, per_episode=dists,
                      terminations=terminations)


def evaluate_params(params: ParamSet, config: RunConfig, episodes: int,
                    seed_offset: int = 900000,
                    actor_name: str = "actor") -> EvalReport:
    """Mean-action policy over fresh scenario seeds; deterministic."""
    wm_cfg = world_model_config(config)
    thresholds = TtcThresholds()
    results = []
    for i in range(episodes):
        world = spawn_scenario(seed=config.seed * 100000 + seed_offset + i,
                               n_traffic=config.n_traffic,
                               map_id=config.map_id)
        results.append(run_policy_episode(
            params, wm_cfg, world, config.shaping, thresholds,
            config.max_episode_steps, mode="mean", actor_name=actor_name))
    return report_from_episodes(results)


def evaluate_checkpoint(path, config: RunConfig | None, episodes: int,
                        seed_offset: int = 900000) -> EvalReport:
    params, stored = load_checkpoint(path)
    cfg = config if config is not None else RunConfig.from_dict(stored)
    wm_cfg = world_model_config(cfg)
    enc_w = params["wm.enc.l0.W"] if "wm.enc.l0.W" in params else None
    if enc_w is None or enc_w.data.shape[0] != wm_cfg.obs_dim:
        raise CheckpointError("checkpoint incompatible with config dims")
    if params["wm.rnn.Uz"].data.shape[0] != wm_cfg.context_dim:
        raise CheckpointError("checkpoint incompatible with config dims")
    return evaluate_params(params, cfg, episodes, seed_offset=seed_offset)


def evaluate_scripted_expert(config: RunConfig, episodes: int,
                             seed_offset: int = 800000) -> EvalReport:
    """Pure-pursuit expert baseline under the same metric."""
    from .training import EpisodeResult
    from ..safety import compute_step_reward
    from ..simworld.world import MAX_WHEEL_ANGLE
    from .metrics import episode_distance

    thresholds = TtcThresholds()
    results = []
    for i in range(episodes):
        world = spawn_scenario(seed=config.seed * 100000 + seed_offset + i,
                               n_traffic=config.n_traffic,
                               map_id=config.map_id)
        expert = ScriptedExpert()
        speeds, rewards = [], []
        termination = "max_steps"
        for _ in range(config.max_episode_steps):
            a = expert.act(world)
            _, _, info, term = world.step(a)
            reward, _ = compute_step_reward(info, thresholds,
                                            a.steer * MAX_WHEEL_ANGLE,
                                            shaping=config.shaping)
            speeds.append(world.ego.speed)
            rewards.append(reward)
            if term.done:
                termination = term.reason
                break
        speeds = np.array(speeds)
        results.append(EpisodeResult(
            steps=len(speeds), distance=episode_distance(speeds),
            termination=termination, reward_sum=float(np.sum(rewards)),
            speeds=speeds, obs=np.zeros((0, OBS_DIM)),
            actions=np.zeros((0, 2)), rewards=np.array(rewards)))
    return report_from_episodes(results)
