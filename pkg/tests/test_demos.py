import numpy as np
import pytest
from scipy import stats

from nfdrive import demos as dm
from nfdrive.demos import (DemoDataset, DemoEpisode, DemoFormatError,
                           DemoTransition, ReplayBuffer, dumps, load, loads,
                           record_episode, save)
from nfdrive.simworld import ScriptedExpert, spawn_scenario
from nfdrive.simworld.world import EgoAction


def make_dataset(n_episodes=3, steps=5, obs_dim=4, action_dim=2, seed=0):
    rng = np.random.default_rng(seed)
    ds = DemoDataset(obs_dim=obs_dim, action_dim=action_dim, source="scripted")
    for e in range(n_episodes):
        ep = DemoEpisode(episode_id=e, seed=100 + e)
        for t in range(steps):
            ep.transitions.append(DemoTransition(
                observation=rng.normal(size=obs_dim),
                action=rng.uniform(-1, 1, size=action_dim),
                reward=float(rng.normal()),
                done=(t == steps - 1), step=t))
        ds.add_episode(ep)
    return ds


def test_empty_dataset_round_trip():
    ds = DemoDataset(obs_dim=3, action_dim=2)
    assert loads(dumps(ds)) == ds


def test_dataset_round_trip_bit_exact(tmp_path):
    ds = make_dataset()
    path = tmp_path / "demos.txt"
    save(ds, path)
    back = load(path)
    assert back == ds
    for ep_a, ep_b in zip(ds.episodes, back.episodes):
        for a, b in zip(ep_a.transitions, ep_b.transitions):
            assert a.observation.tobytes() == b.observation.tobytes()
            assert a.action.tobytes() == b.action.tobytes()
            assert np.float64(a.reward).tobytes() == np.float64(b.reward).tobytes()


def test_truncated_file_fails_loudly():
    text = dumps(make_dataset())
    lines = text.splitlines()
    # cut mid-record: drop the final "end" and one transition
    broken = "\n".join(lines[:-2]) + "\n"
    with pytest.raises(DemoFormatError):
        loads(broken)


def test_corrupted_record_length_detected():
    text = dumps(make_dataset(obs_dim=4))
    lines = text.splitlines()
    toks = lines[2].split()
    lines[2] = " ".join(toks[:-3] + toks[-2:])    # remove one float
    with pytest.raises(DemoFormatError):
        loads("\n".join(lines) + "\n")


def test_version_and_header_validation():
    ds = make_dataset(n_episodes=1, steps=1)
    text = dumps(ds)
    with pytest.raises(DemoFormatError):
        loads(text.replace(f"{dm.FORMAT_NAME} 1", f"{dm.FORMAT_NAME} 2"))
    with pytest.raises(DemoFormatError):
        loads("garbage\n")
    with pytest.raises(DemoFormatError):
        loads("")
    with pytest.raises(DemoFormatError):
        DemoDataset(source="dreamed")


def test_episode_step_contiguity_enforced():
    ds = DemoDataset(obs_dim=2, action_dim=2)
    ep = DemoEpisode(episode_id=0)
    ep.transitions.append(DemoTransition(np.zeros(2), np.zeros(2), 0.0, False, 1))
    with pytest.raises(DemoFormatError):
        ds.add_episode(ep)


def test_declared_step_count_checked():
    text = dumps(make_dataset(n_episodes=1, steps=3))
    lines = text.splitlines()
    del lines[2]                                  # silently drop a record
    with pytest.raises(DemoFormatError):
        loads("\n".join(lines) + "\n")


def test_record_episode_counts_and_done_flag():
    world = spawn_scenario(seed=3, n_traffic=0, map_id="ring")
    expert = ScriptedExpert()

    def action_fn(obs_vec):
        return expert.act(world)

    ep = record_episode(world, action_fn, episode_id=0, seed=3, max_steps=100)
    assert len(ep) == 100 or ep.transitions[-1].done
    dones = [t.done for t in ep.transitions]
    if ep.truncated:
        assert not any(dones)
    else:
        assert sum(dones) == 1 and dones[-1]
    assert [t.step for t in ep.transitions] == list(range(len(ep)))


def test_recorded_episode_replays_bit_exact():
    world = spawn_scenario(seed=7, n_traffic=2, map_id="ring")
    expert = ScriptedExpert()
    ep = record_episode(world, lambda o: expert.act(world), episode_id=0,
                        seed=7, max_steps=60)

    replay = spawn_scenario(seed=7, n_traffic=2, map_id="ring")
    obs = replay.observe().vector()
    for t in ep.transitions:
        assert obs.tobytes() == t.observation.tobytes()
        a = EgoAction(longitudinal=float(t.action[0]), steer=float(t.action[1]))
        _, nxt, _, term = replay.step(a)
        obs = nxt.vector()
        assert term.done == t.done


def test_replay_buffer_pinned_demos_and_fifo():
    buf = ReplayBuffer(capacity=2)
    buf.add_demo_dataset(make_dataset(n_episodes=2, steps=4))
    marker = []
    for i in range(4):
        obs = np.full((3, 4), float(i))
        buf.add_agent_episode(obs, np.zeros((3, 2)), np.zeros(3))
        marker.append(obs)
    assert buf.n_episodes == 2 + 2
    # only the two newest agent episodes survive
    assert buf._agent[0][0][0, 0] == 2.0
    assert buf._agent[1][0][0, 0] == 3.0
    assert len(buf._demo) == 2


def test_single_episode_exact_length_is_only_window():
    buf = ReplayBuffer(capacity=4)
    obs = np.arange(10, dtype=np.float64).reshape(5, 2)
    buf.add_agent_episode(obs, np.zeros((5, 2)), np.arange(5.0))
    o, a, r = buf.sample_subsequences(3, 5, np.random.default_rng(0))
    assert o.shape == (5, 3, 2)
    for b in range(3):
        np.testing.assert_array_equal(o[:, b], obs)


def test_sampling_deterministic_per_seed_and_no_boundary_crossing():
    buf = ReplayBuffer(capacity=8)
    for i in range(3):
        T = 6 + i
        obs = np.full((T, 2), float(i)) + np.arange(T)[:, None] * 0.1
        buf.add_agent_episode(obs, np.zeros((T, 2)), np.zeros(T))
    a1 = buf.sample_subsequences(8, 4, np.random.default_rng(5))
    a2 = buf.sample_subsequences(8, 4, np.random.default_rng(5))
    np.testing.assert_array_equal(a1[0], a2[0])
    # every sampled window lies inside one episode: the integer part of the
    # observation identifies the episode and must be constant per window
    ids = np.floor(a1[0][:, :, 0] + 1e-9)
    for b in range(8):
        assert len(np.unique(ids[:, b])) == 1


def test_sampling_requires_long_enough_episode():
    buf = ReplayBuffer(capacity=2)
    buf.add_agent_episode(np.zeros((3, 2)), np.zeros((3, 2)), np.zeros(3))
    with pytest.raises(DemoFormatError):
        buf.sample_subsequences(1, 4, np.random.default_rng(0))


def test_offset_distribution_uniform_chi_squared():
    buf = ReplayBuffer(capacity=2)
    T, L = 20, 5                         # 16 valid offsets
    obs = np.arange(T, dtype=np.float64)[:, None] * np.ones((1, 2))
    buf.add_agent_episode(obs, np.zeros((T, 2)), np.zeros(T))
    rng = np.random.default_rng(11)
    draws = 100000
    o, _, _ = buf.sample_subsequences(draws, L, rng)
    offsets = o[0, :, 0].astype(int)
    counts = np.bincount(offsets, minlength=T - L + 1)
    _, pvalue = stats.chisquare(counts)
    assert pvalue > 0.01
