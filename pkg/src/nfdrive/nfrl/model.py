"""Sequential latent world model.

A deterministic recurrent context summarizes history; a stochastic latent
is inferred per step from a Gaussian base belief pushed through a planar
flow stack (separate stacks for the filtering posterior and the transition
prior).  Observations and rewards are decoded from (context, stoch).

Observations are normalized with fixed scales inside encode/decode, so
all reconstruction errors are reported in normalized units.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..diffmath import tensor as T
from ..diffmath.distributions import DiagGaussian, stddev_from_raw
from ..diffmath.layers import init_gru, init_mlp, gru_step, mlp
from ..diffmath.params import ParamSet
from ..diffmath.tensor import DiffError, Tensor
from ..simworld.world import MAX_RAY_RANGE, N_RAYS, OBS_DIM
from .flows import flow_forward, flow_log_density, init_flow_stack


@dataclass
class WorldModelConfig:
    obs_dim: int = OBS_DIM
    action_dim: int = 2
    embed_dim: int = 64
    context_dim: int = 64
    stoch_dim: int = 16
    k_flows: int = 4
    free_nats: float = 3.0
    enc_hidden: int = 64
    dec_hidden: int = 64
    reward_hidden: int = 32

    def __post_init__(self):
        for f in ("obs_dim", "action_dim", "embed_dim", "context_dim",
                  "stoch_dim", "enc_hidden", "dec_hidden", "reward_hidden"):
            if getattr(self, f) < 1:
                raise DiffError(f"{f} must be >= 1")
        if self.k_flows < 0:
            raise DiffError("k_flows must be >= 0")


def obs_scales(obs_dim: int = OBS_DIM) -> np.ndarray:
    """Fixed per-channel normalization divisors (ranges, speed, heading, offset)."""
    s = np.ones(obs_dim)
    if obs_dim != OBS_DIM:        # reduced test configs: no normalization
        return s
    s[:N_RAYS] = MAX_RAY_RANGE
    s[N_RAYS] = 10.0        # speed, m/s
    s[N_RAYS + 1] = np.pi   # heading error, radians
    s[N_RAYS + 2] = 5.0     # lateral offset, meters
    return s


def init_world_model(params: ParamSet, cfg: WorldModelConfig,
                     rng: np.random.Generator, group: str = "model") -> None:
    init_mlp(params, "wm.enc", [cfg.obs_dim, cfg.enc_hidden, cfg.embed_dim],
             rng, group=group)
    init_gru(params, "wm.rnn", cfg.stoch_dim + cfg.action_dim, cfg.context_dim,
             rng, group=group)
    init_mlp(params, "wm.post",
             [cfg.context_dim + cfg.embed_dim, cfg.enc_hidden, 2 * cfg.stoch_dim],
             rng, group=group)
    init_mlp(params, "wm.prior",
             [cfg.context_dim, cfg.enc_hidden, 2 * cfg.stoch_dim],
             rng, group=group)
    init_mlp(params, "wm.dec",
             [cfg.context_dim + cfg.stoch_dim, cfg.dec_hidden, cfg.dec_hidden,
              cfg.obs_dim], rng, group=group)
    init_mlp(params, "wm.rew",
             [cfg.context_dim + cfg.stoch_dim, cfg.reward_hidden,
              cfg.reward_hidden, 1], rng, group=group)
    init_flow_stack(params, "wm.psi", cfg.k_flows, cfg.stoch_dim, rng, group=group)
    init_flow_stack(params, "wm.omega", cfg.k_flows, cfg.stoch_dim, rng, group=group)


def encode(params: ParamSet, cfg: WorldModelConfig, obs: Tensor) -> Tensor:
    """Normalize and embed raw observations (..., obs_dim) -> (..., embed)."""
    obs = T.as_tensor(obs)
    if obs.shape[-1] != cfg.obs_dim:
        raise DiffError(f"observation dim {obs.shape[-1]} != {cfg.obs_dim}")
    normed = T.div(obs, obs_scales(cfg.obs_dim))
    return mlp(params, "wm.enc", normed, 2)


@dataclass
class Belief:
    """Flow-transformed belief: Gaussian base plus a named planar stack."""
    base: DiagGaussian
    flow_name: str
    k_flows: int

    def rsample(self, params: ParamSet, noise: np.ndarray):
        """Draw, push through flows; returns (sample, log density at sample)."""
        s0 = self.base.rsample(noise)
        sK, sld = flow_forward(params, self.flow_name, self.k_flows, s0)
        return sK, T.sub(self.base.log_prob(s0), sld)

    def log_density(self, params: ParamSet, y: Tensor) -> Tensor:
        return flow_log_density(params, self.flow_name, self.k_flows,
                                self.base.log_prob, y)


def _split_gaussian(raw: Tensor, d: int) -> DiagGaussian:
    mean = T.take(raw, (Ellipsis, slice(0, d)))
    stddev = stddev_from_raw(T.take(raw, (Ellipsis, slice(d, 2 * d))))
    return DiagGaussian(mean, stddev)


def posterior_belief(params: ParamSet, cfg: WorldModelConfig,
                     context: Tensor, embed: Tensor) -> Belief:
    raw = mlp(params, "wm.post", T.concat([context, embed], axis=-1), 2)
    return Belief(_split_gaussian(raw, cfg.stoch_dim), "wm.psi", cfg.k_flows)


def prior_belief(params: ParamSet, cfg: WorldModelConfig,
                 context: Tensor) -> Belief:
    raw = mlp(params, "wm.prior", context, 2)
    return Belief(_split_gaussian(raw, cfg.stoch_dim), "wm.omega", cfg.k_flows)


def advance_context(params: ParamSet, cfg: WorldModelConfig, context: Tensor,
                    stoch: Tensor, action: Tensor) -> Tensor:
    return gru_step(params, "wm.rnn", context,
                    T.concat([stoch, action], axis=-1))


def decode_observation(params: ParamSet, cfg: WorldModelConfig,
                       context: Tensor, stoch: Tensor) -> DiagGaussian:
    """Unit-stddev Gaussian over normalized observations."""
    mean = mlp(params, "wm.dec", T.concat([context, stoch], axis=-1), 3)
    return DiagGaussian(mean, T.constant(np.ones(mean.shape)))


def predict_reward(params: ParamSet, cfg: WorldModelConfig,
                   context: Tensor, stoch: Tensor) -> DiagGaussian:
    mean = mlp(params, "wm.rew", T.concat([context, stoch], axis=-1), 3)
    return DiagGaussian(mean, T.constant(np.ones(mean.shape)))


def initial_context(cfg: WorldModelConfig, batch: int) -> Tensor:
    return T.constant(np.zeros((batch, cfg.context_dim)))


@dataclass
class ModelLossBreakdown:
    total: Tensor
    obs_ll: float
    reward_ll: float
    kl_raw: float                        # before the free-nats clip
    kl: float                            # after the clip, as used in the loss
    contexts: list = field(default_factory=list)   # (B, context) per step
    stochs: list = field(default_factory=list)     # (B, stoch) per step


def model_loss(params: ParamSet, cfg: WorldModelConfig, obs: np.ndarray,
               actions: np.ndarray, rewards: np.ndarray,
               rng: np.random.Generator) -> ModelLossBreakdown:
    """Filtering unroll with the single-sample evidence-bound loss.

    obs: (T, B, obs_dim); actions: (T, B, action_dim); rewards: (T, B).
    Per step the posterior-vs-prior divergence is a single-sample estimate
    log q(s) - log p(s) at the posterior sample; its batch mean is clipped
    from below at free_nats so small divergences stop contributing gradient.
    """
    obs = np.asarray(obs, dtype=np.float64)
    actions = np.asarray(actions, dtype=np.float64)
    rewards = np.asarray(rewards, dtype=np.float64)
    if obs.ndim != 3 or obs.shape[0] < 2:
        raise DiffError("need (T >= 2, B, obs_dim) observations")
    steps, batch = obs.shape[0], obs.shape[1]
    if actions.shape != (steps, batch, cfg.action_dim):
        raise DiffError(f"bad action shape {actions.shape}")
    if rewards.shape != (steps, batch):
        raise DiffError(f"bad reward shape {rewards.shape}")

    scales = obs_scales(cfg.obs_dim)
    context = initial_context(cfg, batch)
    obs_ll = T.constant(0.0)
    reward_ll = T.constant(0.0)
    kl_sum = T.constant(0.0)
    kl_raw_sum = T.constant(0.0)
    contexts, stochs = [], []
    for t in range(steps):
        embed = encode(params, cfg, T.constant(obs[t]))
        post = posterior_belief(params, cfg, context, embed)
        noise = rng.standard_normal((batch, cfg.stoch_dim))
        stoch, log_q = post.rsample(params, noise)
        prior = prior_belief(params, cfg, context)
        log_p = prior.log_density(params, stoch)
        kl_t = T.tmean(T.sub(log_q, log_p))
        kl_raw_sum = T.add(kl_raw_sum, kl_t)
        kl_sum = T.add(kl_sum, T.maximum(T.constant(cfg.free_nats), kl_t))

        obs_dist = decode_observation(params, cfg, context, stoch)
        obs_ll = T.add(obs_ll, T.tmean(obs_dist.log_prob(
            T.constant(obs[t] / scales))))
        rew_dist = predict_reward(params, cfg, context, stoch)
        reward_ll = T.add(reward_ll, T.tmean(rew_dist.log_prob(
            T.constant(rewards[t][..., None]))))

        contexts.append(context)
        stochs.append(stoch)
        if t + 1 < steps:
            context = advance_context(params, cfg, context, stoch,
                                      T.constant(actions[t]))

    total = T.add(T.sub(kl_sum, T.add(obs_ll, reward_ll)), 0.0)
    if not np.isfinite(total.data).all():
        raise DiffError("non-finite model loss")
    return ModelLossBreakdown(total=total, obs_ll=obs_ll.item(),
                              reward_ll=reward_ll.item(),
                              kl_raw=kl_raw_sum.item(), kl=kl_sum.item(),
                              contexts=contexts, stochs=stochs)


@dataclass
class ImaginedRollout:
    """H latent transitions: state_0 is the start, reward_means[i] is the
    reward decoded at state_{i+1} (reward for arriving)."""
    contexts: list      # H+1 tensors (B, context)
    stochs: list        # H+1 tensors (B, stoch)
    actions: list       # H tensors (B, action_dim)
    reward_means: list  # H tensors (B,)


def imagine_rollout(params: ParamSet, cfg: WorldModelConfig, actor_fn,
                    start_context: Tensor, start_stoch: Tensor, horizon: int,
                    rng: np.random.Generator) -> ImaginedRollout:
    """Closed-loop latent rollout: actor picks actions, prior advances.

    actor_fn(context, stoch, rng) -> action Tensor (B, action_dim), fully
    differentiable so value gradients reach the actor through the dynamics.
    """
    if horizon < 1:
        raise DiffError("horizon must be >= 1")
    context, stoch = T.as_tensor(start_context), T.as_tensor(start_stoch)
    batch = context.shape[0]
    out = ImaginedRollout([context], [stoch], [], [])
    for _ in range(horizon):
        action = actor_fn(context, stoch, rng)
        context = advance_context(params, cfg, context, stoch, action)
        prior = prior_belief(params, cfg, context)
        noise = rng.standard_normal((batch, cfg.stoch_dim))
        stoch, _ = prior.rsample(params, noise)
        reward = predict_reward(params, cfg, context, stoch)
        out.contexts.append(context)
        out.stochs.append(stoch)
        out.actions.append(action)
        out.reward_means.append(reward.mean)
    return out


def filter_step(params: ParamSet, cfg: WorldModelConfig, context: Tensor,
                obs: np.ndarray, prev_stoch: Tensor | None = None,
                prev_action: np.ndarray | None = None,
                rng: np.random.Generator | None = None):
    """One posterior filtering update for online acting.

    Advances the context with the previous (stoch, action) when given, then
    infers the new stochastic latent from the current observation.  Without
    an rng the deterministic belief point (base mean through the flows) is
    used; with one, a reparameterized sample.
    Returns (context, stoch), both detached from any graph.
    """
    if prev_action is not None:
        context = advance_context(params, cfg, context, prev_stoch,
                                  T.constant(np.atleast_2d(prev_action)))
    obs2d = np.atleast_2d(np.asarray(obs, dtype=np.float64))
    embed = encode(params, cfg, T.constant(obs2d))
    post = posterior_belief(params, cfg, context, embed)
    if rng is None:
        stoch, _ = flow_forward(params, post.flow_name, post.k_flows,
                                post.base.mean)
    else:
        noise = rng.standard_normal(post.base.mean.shape)
        stoch, _ = post.rsample(params, noise)
    return T.constant(context.data), T.constant(stoch.data)


def filter_sequence(params: ParamSet, cfg: WorldModelConfig, obs: np.ndarray,
                    actions: np.ndarray,
                    rng: np.random.Generator | None = None):
    """Filter a whole (T, B, ...) batch; returns (contexts, stochs) lists of
    detached (B, dim) tensors, one per step.  Used to map recorded
    observations into latent states for behavior cloning."""
    obs = np.asarray(obs, dtype=np.float64)
    actions = np.asarray(actions, dtype=np.float64)
    steps, batch = obs.shape[0], obs.shape[1]
    context = initial_context(cfg, batch)
    contexts, stochs = [], []
    stoch = None
    for t in range(steps):
        prev_action = actions[t - 1] if t > 0 else None
        context, stoch = filter_step(params, cfg, context, obs[t],
                                     prev_stoch=stoch,
                                     prev_action=prev_action, rng=rng)
        contexts.append(context)
        stochs.append(stoch)
    return contexts, stochs


def open_loop_eval(params: ParamSet, cfg: WorldModelConfig, obs: np.ndarray,
                   actions: np.ndarray, filter_steps: int = 15,
                   total_steps: int = 30) -> dict:
    """Filter the first `filter_steps` with the posterior, then roll the
    prior open-loop with the recorded actions; decode means throughout.

    filter_steps=0 is the prior-only baseline (no observation ever seen).
    Returns per-step mean squared error in normalized observation units.
    """
    obs = np.asarray(obs, dtype=np.float64)
    actions = np.asarray(actions, dtype=np.float64)
    if obs.shape[0] < total_steps:
        raise DiffError(f"need >= {total_steps} steps, got {obs.shape[0]}")
    if not 0 <= filter_steps <= total_steps:
        raise DiffError("filter_steps out of range")
    scales = obs_scales(cfg.obs_dim)
    context = initial_context(cfg, 1)
    errors = np.zeros(total_steps)
    for t in range(total_steps):
        o_t = obs[t][None, :]
        if t < filter_steps:
            embed = encode(params, cfg, T.constant(o_t))
            belief = posterior_belief(params, cfg, context, embed)
        else:
            belief = prior_belief(params, cfg, context)
        # deterministic belief point: base mean pushed through the flows
        stoch, _ = flow_forward(params, belief.flow_name, belief.k_flows,
                                belief.base.mean)
        decoded = decode_observation(params, cfg, context, stoch).mean.data
        errors[t] = float(np.mean((decoded - o_t / scales) ** 2))
        context = advance_context(params, cfg, context, stoch,
                                  T.constant(actions[t][None, :]))
    return {
        "per_step_mse": errors,
        "filtered_mse": float(np.mean(errors[:filter_steps])) if filter_steps else float("nan"),
        "open_loop_mse": float(np.mean(errors[filter_steps:total_steps])),
    }
