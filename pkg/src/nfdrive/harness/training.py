"""Training orchestration: buffer seeding, environment collection, and the
periodic joint update cadence, for all four method variants."""

from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import policy as pol
from ..demos import DemoDataset, ReplayBuffer, load as load_demos
from ..diffmath.optim import Adam
from ..diffmath.params import ParamSet, value_and_grad
from ..nfrl import (WorldModelConfig, filter_sequence, filter_step,
                    init_world_model, initial_context, model_loss)
from ..nfrl.checkpoint import save_checkpoint
from ..policy import JointLossWeights, LambdaConfig, act, joint_step
from ..safety import TtcThresholds, compute_step_reward
from ..simworld.world import (MAX_WHEEL_ANGLE, OBS_DIM, EgoAction, World,
                              spawn_scenario)
from .config import ConfigError, RunConfig
from .metrics import append_log_record, episode_distance


def world_model_config(cfg: RunConfig) -> WorldModelConfig:
    return WorldModelConfig(obs_dim=OBS_DIM, action_dim=2,
                            embed_dim=cfg.embed_dim,
                            context_dim=cfg.context_dim,
                            stoch_dim=cfg.stoch_dim, k_flows=cfg.k_flows,
                            free_nats=cfg.free_nats,
                            enc_hidden=cfg.enc_hidden,
                            dec_hidden=cfg.dec_hidden,
                            reward_hidden=cfg.reward_hidden)


def lambda_config(cfg: RunConfig) -> LambdaConfig:
    return LambdaConfig(gamma=cfg.gamma, lam=cfg.lam, horizon=cfg.horizon)


def build_params(cfg: RunConfig, seed: int) -> ParamSet:
    rng = np.random.default_rng(seed)
    params = ParamSet()
    wm = world_model_config(cfg)
    init_world_model(params, wm, rng)
    pol.init_actor(params, wm, rng, hidden=cfg.actor_hidden)
    pol.init_critic(params, wm, rng, hidden=cfg.critic_hidden)
    pol.init_actor(params, wm, rng, name="bc", group="bc",
                   hidden=cfg.actor_hidden)
    return params


@dataclass
class EpisodeResult:
    steps: int
    distance: float
    termination: str
    reward_sum: float
    speeds: np.ndarray
    obs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray


def run_policy_episode(params: ParamSet, wm_cfg: WorldModelConfig,
                       world: World, shaping: str,
                       thresholds: TtcThresholds, max_steps: int,
                       mode: str = "sample",
                       rng: np.random.Generator | None = None,
                       actor_name: str = "actor") -> EpisodeResult:
    """Roll one environment episode under the latent-state policy."""
    context = initial_context(wm_cfg, 1)
    stoch = None
    prev_action = None
    obs = world.observe().vector()
    obs_l, act_l, rew_l, speeds = [], [], [], []
    reward_sum = 0.0
    termination = "max_steps"
    for step in range(max_steps):
        context, stoch = filter_step(params, wm_cfg, context, obs,
                                     prev_stoch=stoch,
                                     prev_action=prev_action)
        mean_a = act(params, wm_cfg, context, stoch, mode="mean",
                     name=actor_name)
        if mode == "mean":
            a = mean_a
        else:
            a = act(params, wm_cfg, context, stoch, mode="sample", rng=rng,
                    name=actor_name)
        predicted_steer = mean_a.steer * MAX_WHEEL_ANGLE
        _, next_obs, info, term = world.step(a)
        reward, _ = compute_step_reward(info, thresholds, predicted_steer,
                                        shaping=shaping)
        obs_l.append(obs)
        act_l.append(np.array([a.longitudinal, a.steer]))
        rew_l.append(reward)
        speeds.append(world.ego.speed)
        reward_sum += reward
        prev_action = act_l[-1]
        obs = next_obs.vector()
        if term.done:
            termination = term.reason
            break
    speeds = np.array(speeds)
    return EpisodeResult(steps=len(rew_l), distance=episode_distance(speeds),
                         termination=termination, reward_sum=reward_sum,
                         speeds=speeds, obs=np.array(obs_l),
                         actions=np.array(act_l), rewards=np.array(rew_l))


def run_random_episode(world: World, shaping: str,
                       thresholds: TtcThresholds, max_steps: int,
                       rng: np.random.Generator) -> EpisodeResult:
    """Exploration seeding: uniform random actions."""
    obs = world.observe().vector()
    obs_l, act_l, rew_l, speeds = [], [], [], []
    reward_sum = 0.0
    termination = "max_steps"
    for _ in range(max_steps):
        a = EgoAction(longitudinal=float(rng.uniform(-2.0, 3.0)),
                      steer=float(rng.uniform(-0.3, 0.3)))
        _, next_obs, info, term = world.step(a)
        reward, _ = compute_step_reward(info, thresholds, a.steer * MAX_WHEEL_ANGLE,
                                        shaping=shaping)
        obs_l.append(obs)
        act_l.append(np.array([a.longitudinal, a.steer]))
        rew_l.append(reward)
        speeds.append(world.ego.speed)
        reward_sum += reward
        obs = next_obs.vector()
        if term.done:
            termination = term.reason
            break
    speeds = np.array(speeds)
    return EpisodeResult(steps=len(rew_l), distance=episode_distance(speeds),
                         termination=termination, reward_sum=reward_sum,
                         speeds=speeds, obs=np.array(obs_l),
                         actions=np.array(act_l), rewards=np.array(rew_l))


class Trainer:
    """Single-threaded, seed-deterministic training driver."""

    def __init__(self, config: RunConfig):
        self.cfg = config
        self.wm_cfg = world_model_config(config)
        self.lcfg = lambda_config(config)
        self.thresholds = TtcThresholds()
        self.params = build_params(config, config.seed)
        self.opts = {
            "model": Adam(self.params, lr=config.model_lr, group="model"),
            "actor": Adam(self.params, lr=config.actor_lr, group="actor"),
            "critic": Adam(self.params, lr=config.critic_lr, group="critic"),
        }
        self.rng = np.random.default_rng(config.seed * 7919 + 17)
        self.buffer = ReplayBuffer(capacity=config.buffer_capacity)
        self.demo_dataset: DemoDataset | None = None
        self.demo_buffer: ReplayBuffer | None = None
        if config.demo_path:
            self.demo_dataset = load_demos(config.demo_path)
            self.demo_buffer = ReplayBuffer(capacity=1)
            self.demo_buffer.add_demo_dataset(self.demo_dataset)
            self.buffer.add_demo_dataset(self.demo_dataset)
        self._pending_steps = 0
        self.total_env_steps = 0
        self.weights = JointLossWeights(k=config.k)

    def spawn(self, episode_index: int, offset: int = 0) -> World:
        seed = self.cfg.seed * 100000 + offset + episode_index
        return spawn_scenario(seed=seed, n_traffic=self.cfg.n_traffic,
                              map_id=self.cfg.map_id)

    # ----------------------------------------------------------- demos

    def _demo_batch(self, steps: int = 8, batch: int = 8):
        """Filter a fresh sample of demo windows into latent (s, a) pairs."""
        obs, actions, _ = self.demo_buffer.sample_subsequences(
            batch, steps, self.rng)
        contexts, stochs = filter_sequence(self.params, self.wm_cfg, obs,
                                           actions)
        flat_ctx = np.concatenate([c.data for c in contexts], axis=0)
        flat_st = np.concatenate([s.data for s in stochs], axis=0)
        flat_a = actions.reshape(-1, actions.shape[-1])
        idx = self.rng.choice(len(flat_a),
                              size=min(self.cfg.max_starts, len(flat_a)),
                              replace=False)
        from ..diffmath.tensor import Tensor
        return (Tensor(flat_ctx[idx]), Tensor(flat_st[idx]), flat_a[idx])

    def pretrain_on_demos(self) -> None:
        """World-model fitting on demos, then behavior cloning the actor."""
        if self.demo_buffer is None:
            raise ConfigError("demo pretraining requires a demo dataset")
        seq = min(self.cfg.seq_length,
                  min(e[0].shape[0] for e in self.demo_buffer._demo))
        for _ in range(self.cfg.bc_epochs):
            obs, actions, rewards = self.demo_buffer.sample_subsequences(
                self.cfg.batch_size, seq, self.rng)

            def loss_fn(ps):
                return model_loss(ps, self.wm_cfg, obs, actions, rewards,
                                  self.rng).total
            _, grads = value_and_grad(loss_fn, self.params)
            self.opts["model"].step(
                {n: grads[n] for n in self.opts["model"].names})

        ctx, st, acts = self._demo_batch(steps=seq,
                                         batch=self.cfg.batch_size)
        pol.bc_pretrain(self.params, self.wm_cfg, ctx, st, acts,
                        epochs=self.cfg.bc_epochs, lr=self.cfg.bc_lr,
                        name="bc")
        # the cloned policy initializes the fine-tuned actor
        for n in self.params.names("bc"):
            target = "actor" + n[len("bc"):]
            self.params[target].data = self.params[n].data.copy()

    # ----------------------------------------------------------- loop

    def _update_if_due(self) -> int:
        updates = 0
        while self._pending_steps >= self.cfg.update_every:
            self._pending_steps -= self.cfg.update_every
            if self.buffer.n_episodes == 0:
                break
            for _ in range(self.cfg.updates_per_cycle):
                seq = min(self.cfg.seq_length, self._longest_episode())
                obs, actions, rewards = self.buffer.sample_subsequences(
                    self.cfg.batch_size, seq, self.rng)
                demo = (self._demo_batch()
                        if (self.demo_buffer is not None
                            and self.cfg.method == "NFRL+SC+Demo") else None)
                joint_step(self.params, self.wm_cfg, self.lcfg, self.weights,
                           obs, actions, rewards, self.opts, self.rng,
                           max_starts=self.cfg.max_starts, demo=demo)
                updates += 1
        return updates

    def _longest_episode(self) -> int:
        eps = self.buffer._demo + self.buffer._agent
        return max(e[0].shape[0] for e in eps)

    def train(self, out_dir) -> dict:
        """Full run; returns paths of the checkpoint and metrics log."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        log_path = out / "metrics.jsonl"
        ckpt_path = out / "checkpoint.npz"
        started = time.monotonic()

        if self.cfg.method in ("BC+Demo", "NFRL+SC+Demo"):
            self.pretrain_on_demos()
        if self.cfg.method == "BC+Demo":
            # cloning only: no environment fine-tuning
            save_checkpoint(ckpt_path, self.params, self.cfg.to_dict())
            return {"checkpoint": str(ckpt_path), "log": str(log_path),
                    "episodes": 0, "wall_clock": time.monotonic() - started}

        for i in range(self.cfg.seed_episodes):
            world = self.spawn(i, offset=50000)
            res = run_random_episode(world, self.cfg.shaping, self.thresholds,
                                     self.cfg.max_episode_steps, self.rng)
            if res.steps >= 2:
                self.buffer.add_agent_episode(res.obs, res.actions, res.rewards)
            self._pending_steps += res.steps
            self.total_env_steps += res.steps
        self._update_if_due()

        for episode in range(1, self.cfg.episodes + 1):
            world = self.spawn(episode)
            res = run_policy_episode(self.params, self.wm_cfg, world,
                                     self.cfg.shaping, self.thresholds,
                                     self.cfg.max_episode_steps,
                                     mode="sample", rng=self.rng)
            if res.steps >= 2:
                self.buffer.add_agent_episode(res.obs, res.actions, res.rewards)
            self._pending_steps += res.steps
            self.total_env_steps += res.steps
            updates = self._update_if_due()
            append_log_record(log_path, {
                "episode": episode, "steps": res.steps,
                "distance": res.distance, "termination": res.termination,
                "reward_sum": res.reward_sum, "updates": updates,
                "env_steps": self.total_env_steps,
            })

        save_checkpoint(ckpt_path, self.params, self.cfg.to_dict())
        return {"checkpoint": str(ckpt_path), "log": str(log_path),
                "episodes": self.cfg.episodes,
                "wall_clock": time.monotonic() - started}
