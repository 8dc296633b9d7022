"""Imagination actor-critic with demonstration augmentation.

The actor is a squashed diagonal Gaussian over ego actions; the critic
regresses lambda-returns computed along imagined latent rollouts.  Both
consume (context, stoch) latent states from the world model.  Behavior
cloning maximizes demo action likelihood; the augmented actor loss adds
a k-weighted demo log-likelihood term to the imagination objective.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diffmath import tensor as T
from .diffmath.distributions import DiagGaussian, stddev_from_raw
from .diffmath.layers import init_mlp, mlp
from .diffmath.optim import Adam
from .diffmath.params import ParamSet, value_and_grad
from .diffmath.tensor import DiffError, Tensor
from .nfrl.model import (ImaginedRollout, WorldModelConfig, imagine_rollout,
                         model_loss)
from .simworld.world import (ACCEL_MAX, ACCEL_MIN, STEER_MAX, STEER_MIN,
                             EgoAction)

ACTION_LOW = np.array([ACCEL_MIN, STEER_MIN])
ACTION_HIGH = np.array([ACCEL_MAX, STEER_MAX])
ACTION_CENTER = (ACTION_HIGH + ACTION_LOW) / 2.0
ACTION_HALFSPAN = (ACTION_HIGH - ACTION_LOW) / 2.0
SQUASH_CLIP = 1.0 - 1e-9       # keeps atanh finite at range endpoints


@dataclass
class LambdaConfig:
    gamma: float = 0.99
    lam: float = 0.95
    horizon: int = 15

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise DiffError(f"gamma must be in (0, 1], got {self.gamma}")
        if not 0.0 <= self.lam <= 1.0:
            raise DiffError(f"lambda must be in [0, 1], got {self.lam}")
        if self.horizon < 1:
            raise DiffError("horizon must be >= 1")


@dataclass
class JointLossWeights:
    alpha0: float = 1.0       # critic
    alpha1: float = 1.0       # actor
    alpha2: float = 1.0       # model
    k: float = 1.5            # demo balance

    def __post_init__(self):
        for f in ("alpha0", "alpha1", "alpha2", "k"):
            if getattr(self, f) < 0.0:
                raise DiffError(f"{f} must be >= 0")


def init_actor(params: ParamSet, cfg: WorldModelConfig,
               rng: np.random.Generator, name: str = "actor",
               group: str = "actor", hidden: int = 64) -> None:
    init_mlp(params, name,
             [cfg.context_dim + cfg.stoch_dim, hidden, hidden,
              2 * cfg.action_dim], rng, group=group)


def init_critic(params: ParamSet, cfg: WorldModelConfig,
                rng: np.random.Generator, name: str = "critic",
                group: str = "critic", hidden: int = 64) -> None:
    init_mlp(params, name,
             [cfg.context_dim + cfg.stoch_dim, hidden, hidden, 1],
             rng, group=group)


def actor_dist(params: ParamSet, cfg: WorldModelConfig, context: Tensor,
               stoch: Tensor, name: str = "actor") -> DiagGaussian:
    """Pre-squash action distribution at a latent state."""
    raw = mlp(params, name, T.concat([context, stoch], axis=-1), 3)
    mean = T.take(raw, (Ellipsis, slice(0, cfg.action_dim)))
    stddev = stddev_from_raw(
        T.take(raw, (Ellipsis, slice(cfg.action_dim, 2 * cfg.action_dim))))
    return DiagGaussian(mean, stddev)


def squash(x: Tensor) -> Tensor:
    """Map unbounded pre-actions into the per-dimension action box."""
    return T.add(ACTION_CENTER, T.mul(ACTION_HALFSPAN, T.tanh(x)))


def unsquash(action: np.ndarray) -> np.ndarray:
    normed = (np.asarray(action, dtype=np.float64) - ACTION_CENTER) / ACTION_HALFSPAN
    return np.arctanh(np.clip(normed, -SQUASH_CLIP, SQUASH_CLIP))


def squashed_log_prob(dist: DiagGaussian, pre_squash: Tensor) -> Tensor:
    """Log density of the squashed action via change of variables.

    pre_squash is the unbounded value whose squash is the action.
    """
    th = T.tanh(pre_squash)
    jac = T.log(T.mul(ACTION_HALFSPAN,
                      T.maximum(T.sub(1.0, T.square(th)), 1e-12)))
    return T.sub(dist.log_prob(pre_squash), T.tsum(jac, axis=-1))


def act(params: ParamSet, cfg: WorldModelConfig, context: Tensor,
        stoch: Tensor, mode: str = "mean",
        rng: np.random.Generator | None = None,
        name: str = "actor") -> EgoAction:
    """Single-state action for environment interaction (B=1 latents)."""
    dist = actor_dist(params, cfg, context, stoch, name=name)
    if mode == "mean":
        pre = dist.mean
    elif mode == "sample":
        if rng is None:
            raise DiffError("sample mode needs an rng")
        pre = dist.rsample(rng.standard_normal(dist.mean.shape))
    else:
        raise DiffError(f"unknown mode {mode!r}")
    a = squash(pre).data.reshape(-1)
    return EgoAction(longitudinal=float(a[0]), steer=float(a[1]))


def actor_sample(params: ParamSet, cfg: WorldModelConfig, context: Tensor,
                 stoch: Tensor, rng: np.random.Generator,
                 name: str = "actor"):
    """Differentiable squashed sample; returns (action, pre_squash, dist)."""
    dist = actor_dist(params, cfg, context, stoch, name=name)
    pre = dist.rsample(rng.standard_normal(dist.mean.shape))
    return squash(pre), pre, dist


def lambda_returns(rewards: list, values: list, cfg: LambdaConfig) -> list:
    """Backward-recursive mixed n-step returns.

    rewards[i] and values[i] are (B,) tensors for steps tau = t+i:
    values[i] = v(s_{tau+1}).  Bootstrap: V_{t+H} = v(s_{t+H}).
    V_tau = r_tau + gamma * ((1 - lam) * v(s_{tau+1}) + lam * V_{tau+1}).
    """
    if len(rewards) != len(values):
        raise DiffError(f"length mismatch {len(rewards)} vs {len(values)}")
    if len(rewards) != cfg.horizon:
        raise DiffError(f"expected {cfg.horizon} steps, got {len(rewards)}")
    rewards = [T.as_tensor(r) for r in rewards]
    values = [T.as_tensor(v) for v in values]
    out: list = [None] * cfg.horizon
    nxt = values[-1]
    for i in reversed(range(cfg.horizon)):
        mix = T.add(T.mul(1.0 - cfg.lam, values[i]), T.mul(cfg.lam, nxt))
        out[i] = T.add(rewards[i], T.mul(cfg.gamma, mix))
        nxt = out[i]
    return out


def _flat(x: Tensor) -> Tensor:
    return T.reshape(x, (-1,))


def _rollout_rewards_values(params: ParamSet, cfg: WorldModelConfig,
                            roll: ImaginedRollout, critic_name: str):
    rewards = [_flat(r) for r in roll.reward_means]
    values = [_flat(critic_value(params, cfg, roll.contexts[i + 1],
                                 roll.stochs[i + 1], name=critic_name))
              for i in range(len(roll.actions))]
    return rewards, values


def critic_value(params: ParamSet, cfg: WorldModelConfig, context: Tensor,
                 stoch: Tensor, name: str = "critic") -> Tensor:
    return mlp(params, name, T.concat([context, stoch], axis=-1), 3)


def actor_loss(params: ParamSet, cfg: WorldModelConfig,
               roll: ImaginedRollout, lcfg: LambdaConfig,
               critic_name: str = "critic") -> Tensor:
    """Negative mean lambda-return; gradients reach the actor through the
    reparameterized imagined dynamics."""
    rewards, values = _rollout_rewards_values(params, cfg, roll, critic_name)
    rets = lambda_returns(rewards, values, lcfg)
    return T.mul(-1.0, T.tmean(T.stack(rets, axis=0)))


def critic_loss(params: ParamSet, cfg: WorldModelConfig,
                roll: ImaginedRollout, lcfg: LambdaConfig,
                critic_name: str = "critic") -> Tensor:
    """Mean halved squared error against detached lambda-targets."""
    rewards, values = _rollout_rewards_values(params, cfg, roll, critic_name)
    targets = [T.constant(r.data) for r in
               lambda_returns([T.constant(r.data) for r in rewards],
                              [T.constant(v.data) for v in values], lcfg)]
    losses = []
    for i in range(len(roll.actions)):
        v = _flat(critic_value(params, cfg,
                               T.constant(roll.contexts[i].data),
                               T.constant(roll.stochs[i].data),
                               name=critic_name))
        losses.append(T.mul(0.5, T.square(T.sub(v, targets[i]))))
    return T.tmean(T.stack(losses, axis=0))


def bc_loss(params: ParamSet, cfg: WorldModelConfig, contexts: Tensor,
            stochs: Tensor, actions: np.ndarray,
            name: str = "actor") -> Tensor:
    """Negative mean demo log-likelihood under the named actor."""
    actions = np.asarray(actions, dtype=np.float64)
    if actions.shape[0] == 0:
        raise DiffError("empty demo batch")
    dist = actor_dist(params, cfg, contexts, stochs, name=name)
    pre = T.constant(unsquash(actions))
    return T.mul(-1.0, T.tmean(squashed_log_prob(dist, pre)))


def bc_pretrain(params: ParamSet, cfg: WorldModelConfig, contexts: Tensor,
                stochs: Tensor, actions: np.ndarray, epochs: int,
                lr: float = 8e-5, name: str = "bc") -> list[float]:
    """Full-batch likelihood maximization; returns the per-epoch history
    of the demo log-likelihood."""
    group = params.group_of(f"{name}.l0.W")
    opt = Adam(params, lr=lr, group=group)
    history = []
    for _ in range(epochs):
        def loss_fn(ps):
            return bc_loss(ps, cfg, contexts, stochs, actions, name=name)
        val, grads = value_and_grad(loss_fn, params)
        opt.step(grads)
        history.append(-val)
    return history


def augmented_actor_loss(params: ParamSet, cfg: WorldModelConfig,
                         roll: ImaginedRollout, lcfg: LambdaConfig,
                         demo_contexts: Tensor, demo_stochs: Tensor,
                         demo_actions: np.ndarray, k: float,
                         critic_name: str = "critic",
                         actor_name: str = "actor") -> Tensor:
    """Imagination actor loss plus k-weighted demo negative log-likelihood
    under the current actor."""
    base = actor_loss(params, cfg, roll, lcfg, critic_name=critic_name)
    if k == 0.0:
        return base
    demo = bc_loss(params, cfg, demo_contexts, demo_stochs, demo_actions,
                   name=actor_name)
    return T.add(base, T.mul(k, demo))


@dataclass
class JointStepBreakdown:
    model_total: float
    model_kl_raw: float
    actor: float
    critic: float


def _masked_update(params: ParamSet, loss: Tensor, weight: float,
                   opt: Adam) -> float:
    """Backward + optimizer step unless the component weight is zero."""
    if weight == 0.0:
        return loss.item()
    params.zero_grad()
    T.mul(weight, loss).backward()
    grads = {}
    for n in opt.names:
        g = params[n].grad
        grads[n] = g.copy() if g is not None else np.zeros_like(params[n].data)
    opt.step(grads)
    return loss.item()


def joint_step(params: ParamSet, cfg: WorldModelConfig, lcfg: LambdaConfig,
               weights: JointLossWeights, obs: np.ndarray,
               actions: np.ndarray, rewards: np.ndarray, opts: dict,
               rng: np.random.Generator, max_starts: int = 32,
               demo: tuple | None = None, actor_name: str = "actor",
               critic_name: str = "critic") -> JointStepBreakdown:
    """One model + actor + critic update on a (T, B, ...) sequence batch.

    opts maps {"model", "actor", "critic"} to their optimizers.  demo, when
    given, is (contexts Tensor, stochs Tensor, actions array) of filtered
    demonstration pairs; the actor then minimizes the augmented loss with
    weights.k.  A zero alpha masks that component's update entirely.
    """
    bd = model_loss(params, cfg, obs, actions, rewards, rng)
    _masked_update(params, bd.total, weights.alpha2, opts["model"])

    # imagination starts: detached filtered states, subsampled for speed
    flat_ctx = np.concatenate([c.data for c in bd.contexts], axis=0)
    flat_st = np.concatenate([s.data for s in bd.stochs], axis=0)
    n = flat_ctx.shape[0]
    idx = rng.choice(n, size=min(max_starts, n), replace=False)
    start_ctx = T.constant(flat_ctx[idx])
    start_st = T.constant(flat_st[idx])

    def actor_fn(context, stoch, r):
        return actor_sample(params, cfg, context, stoch, r, name=actor_name)[0]

    roll = imagine_rollout(params, cfg, actor_fn, start_ctx, start_st,
                           lcfg.horizon, rng)
    if demo is not None and weights.k > 0.0:
        aloss = augmented_actor_loss(params, cfg, roll, lcfg, demo[0],
                                     demo[1], demo[2], weights.k,
                                     critic_name=critic_name,
                                     actor_name=actor_name)
    else:
        aloss = actor_loss(params, cfg, roll, lcfg, critic_name=critic_name)
    a_val = _masked_update(params, aloss, weights.alpha1, opts["actor"])

    closs = critic_loss(params, cfg, roll, lcfg, critic_name=critic_name)
    c_val = _masked_update(params, closs, weights.alpha0, opts["critic"])
    return JointStepBreakdown(model_total=bd.total.item(),
                              model_kl_raw=bd.kl_raw, actor=a_val,
                              critic=c_val)
