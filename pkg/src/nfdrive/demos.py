"""Demonstration dataset lifecycle: recording, persistence, replay sampling.

Datasets are newline-delimited text with a self-describing header so they
stay diffable and language-neutral.  Floats are written with repr so a
round trip is bit-exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .safety import TtcThresholds, compute_step_reward
from .simworld.world import (ACTION_DIM, DT, OBS_DIM, EgoAction, World)

FORMAT_NAME = "nfdrive-demos"
FORMAT_VERSION = 1
SOURCE_TAGS = ("human_teleop", "scripted")


class DemoFormatError(Exception):
    pass


@dataclass
class DemoTransition:
    observation: np.ndarray
    action: np.ndarray
    reward: float
    done: bool
    step: int

    def __post_init__(self):
        self.observation = np.asarray(self.observation, dtype=np.float64)
        self.action = np.asarray(self.action, dtype=np.float64)

    def __eq__(self, other):
        return (np.array_equal(self.observation, other.observation)
                and np.array_equal(self.action, other.action)
                and self.reward == other.reward and self.done == other.done
                and self.step == other.step)


@dataclass
class DemoEpisode:
    episode_id: int
    transitions: list[DemoTransition] = field(default_factory=list)
    truncated: bool = False
    seed: int | None = None       # spawn seed, enables exact replay

    def __len__(self):
        return len(self.transitions)

    def arrays(self):
        obs = np.stack([t.observation for t in self.transitions])
        act = np.stack([t.action for t in self.transitions])
        rew = np.array([t.reward for t in self.transitions])
        return obs, act, rew


@dataclass
class DemoDataset:
    obs_dim: int = OBS_DIM
    action_dim: int = ACTION_DIM
    dt: float = DT
    source: str = "scripted"
    episodes: list[DemoEpisode] = field(default_factory=list)

    def __post_init__(self):
        if self.source not in SOURCE_TAGS:
            raise DemoFormatError(f"unknown source tag {self.source!r}")

    def add_episode(self, ep: DemoEpisode) -> None:
        for t in ep.transitions:
            if t.observation.shape != (self.obs_dim,):
                raise DemoFormatError("observation dim mismatch")
            if t.action.shape != (self.action_dim,):
                raise DemoFormatError("action dim mismatch")
        steps = [t.step for t in ep.transitions]
        if steps != list(range(len(steps))):
            raise DemoFormatError("step indices must be contiguous from 0")
        self.episodes.append(ep)

    def __eq__(self, other):
        return (self.obs_dim == other.obs_dim
                and self.action_dim == other.action_dim
                and self.dt == other.dt and self.source == other.source
                and len(self.episodes) == len(other.episodes)
                and all(a.episode_id == b.episode_id
                        and a.truncated == b.truncated and a.seed == b.seed
                        and a.transitions == b.transitions
                        for a, b in zip(self.episodes, other.episodes)))


def record_episode(world: World, action_fn, episode_id: int,
                   shaping: str = "f1",
                   thresholds: TtcThresholds | None = None,
                   predicted_fn=None, seed: int | None = None,
                   max_steps: int | None = None) -> DemoEpisode:
    """Drive `world` with action_fn(obs vector) until termination.

    Rewards are the shaped step rewards; predicted_fn (obs -> wheel angle)
    is only needed for f2 shaping.  If max_steps cuts the episode before
    the environment terminates it, the episode is marked truncated.
    """
    thresholds = thresholds or TtcThresholds()
    ep = DemoEpisode(episode_id=episode_id, seed=seed)
    obs = world.observe().vector()
    step = 0
    while True:
        a = action_fn(obs)
        if not isinstance(a, EgoAction):
            a = EgoAction(longitudinal=float(a[0]), steer=float(a[1]))
        predicted = predicted_fn(obs) if predicted_fn is not None else None
        _, next_obs, info, term = world.step(a)
        if predicted is None:
            # no policy prediction available: the applied steering is its
            # own reference, so the smoothness indicator never fires
            predicted = info.steer_applied
        reward, _ = compute_step_reward(info, thresholds, predicted,
                                        shaping=shaping)
        ep.transitions.append(DemoTransition(
            observation=obs, action=np.array([a.longitudinal, a.steer]),
            reward=reward, done=term.done, step=step))
        obs = next_obs.vector()
        step += 1
        if term.done:
            return ep
        if max_steps is not None and step >= max_steps:
            ep.truncated = True
            return ep


def _floats(values) -> str:
    return " ".join(repr(float(v)) for v in values)


def dumps(ds: DemoDataset) -> str:
    lines = [f"{FORMAT_NAME} {FORMAT_VERSION} obs_dim={ds.obs_dim} "
             f"action_dim={ds.action_dim} dt={ds.dt!r} source={ds.source}"]
    for ep in ds.episodes:
        seed = "none" if ep.seed is None else str(ep.seed)
        lines.append(f"episode {ep.episode_id} truncated={int(ep.truncated)} "
                     f"seed={seed} steps={len(ep)}")
        for t in ep.transitions:
            lines.append(f"t {t.step} {_floats(t.observation)} | "
                         f"{_floats(t.action)} | {float(t.reward)!r} {int(t.done)}")
        lines.append("end")
    return "\n".join(lines) + "\n"


def loads(text: str) -> DemoDataset:
    lines = text.splitlines()
    if not lines:
        raise DemoFormatError("empty dataset file")
    head = lines[0].split()
    if len(head) != 6 or head[0] != FORMAT_NAME:
        raise DemoFormatError(f"bad header: {lines[0]!r}")
    if int(head[1]) != FORMAT_VERSION:
        raise DemoFormatError(f"unsupported version {head[1]}")
    fields = dict(kv.split("=", 1) for kv in head[2:])
    ds = DemoDataset(obs_dim=int(fields["obs_dim"]),
                     action_dim=int(fields["action_dim"]),
                     dt=float(fields["dt"]), source=fields["source"])
    i = 1
    while i < len(lines):
        parts = lines[i].split()
        if not parts or parts[0] != "episode" or len(parts) != 5:
            raise DemoFormatError(f"expected episode header at line {i + 1}")
        ep_fields = dict(kv.split("=", 1) for kv in parts[2:])
        seed_s = ep_fields["seed"]
        ep = DemoEpisode(episode_id=int(parts[1]),
                         truncated=bool(int(ep_fields["truncated"])),
                         seed=None if seed_s == "none" else int(seed_s))
        declared = int(ep_fields["steps"])
        i += 1
        while i < len(lines) and lines[i] != "end":
            toks = lines[i].split()
            if not toks or toks[0] != "t":
                raise DemoFormatError(f"expected transition at line {i + 1}")
            body = " ".join(toks[2:])
            segs = body.split(" | ")
            if len(segs) != 3:
                raise DemoFormatError(f"malformed transition at line {i + 1}")
            obs = np.array([float(x) for x in segs[0].split()])
            act = np.array([float(x) for x in segs[1].split()])
            tail = segs[2].split()
            if len(tail) != 2:
                raise DemoFormatError(f"malformed transition at line {i + 1}")
            if obs.shape != (ds.obs_dim,) or act.shape != (ds.action_dim,):
                raise DemoFormatError(f"record length mismatch at line {i + 1}")
            ep.transitions.append(DemoTransition(
                observation=obs, action=act, reward=float(tail[0]),
                done=bool(int(tail[1])), step=int(toks[1])))
            i += 1
        if i >= len(lines):
            raise DemoFormatError("file truncated: missing episode end")
        if len(ep) != declared:
            raise DemoFormatError(
                f"episode {ep.episode_id}: {len(ep)} records, header says {declared}")
        ds.add_episode(ep)
        i += 1
    return ds


def save(ds: DemoDataset, path) -> None:
    Path(path).write_text(dumps(ds))


def load(path) -> DemoDataset:
    return loads(Path(path).read_text())


class ReplayBuffer:
    """Episode store for sequence training.

    Demo episodes are pinned and never evicted; agent episodes evict FIFO
    once capacity (in agent episodes) is reached.  Sampling is uniform over
    all valid (episode, offset) subsequence positions and never crosses an
    episode boundary.
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise DemoFormatError("capacity must be >= 1")
        self.capacity = capacity
        self._demo: list[tuple] = []     # (obs, act, rew) arrays per episode
        self._agent: list[tuple] = []

    def add_demo_dataset(self, ds: DemoDataset) -> None:
        for ep in ds.episodes:
            if len(ep):
                self._demo.append(ep.arrays())

    def add_agent_episode(self, obs: np.ndarray, actions: np.ndarray,
                          rewards: np.ndarray) -> None:
        obs = np.asarray(obs, dtype=np.float64)
        if obs.ndim != 2:
            raise DemoFormatError("episode observations must be (T, obs_dim)")
        self._agent.append((obs, np.asarray(actions, dtype=np.float64),
                            np.asarray(rewards, dtype=np.float64)))
        while len(self._agent) > self.capacity:
            self._agent.pop(0)

    @property
    def n_episodes(self) -> int:
        return len(self._demo) + len(self._agent)

    def n_steps(self) -> int:
        return sum(e[0].shape[0] for e in self._demo + self._agent)

    def sample_subsequences(self, batch: int, length: int,
                            rng: np.random.Generator):
        """(obs, actions, rewards) stacked as (length, batch, ...)."""
        episodes = self._demo + self._agent
        slots = [(i, e[0].shape[0] - length + 1) for i, e in enumerate(episodes)
                 if e[0].shape[0] >= length]
        if not slots:
            raise DemoFormatError(f"no episode holds a length-{length} window")
        weights = np.array([n for _, n in slots], dtype=np.float64)
        probs = weights / weights.sum()
        obs_b, act_b, rew_b = [], [], []
        for _ in range(batch):
            j = int(rng.choice(len(slots), p=probs))
            ep_i, n_off = slots[j]
            off = int(rng.integers(n_off))
            o, a, r = episodes[ep_i]
            obs_b.append(o[off:off + length])
            act_b.append(a[off:off + length])
            rew_b.append(r[off:off + length])
        return (np.stack(obs_b, axis=1), np.stack(act_b, axis=1),
                np.stack(rew_b, axis=1))
