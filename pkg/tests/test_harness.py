import json
import socket
import threading

import numpy as np
import pytest

from nfdrive.demos import DemoDataset, load as load_demos, record_episode, save as save_demos
from nfdrive.harness import (EnvServer, EnvSession, EvalReport,
                             PROTOCOL_VERSION, RunConfig, Trainer,
                             append_log_record, compute_asd_msd,
                             episode_distance, episodes_to_baseline,
                             evaluate_checkpoint, evaluate_params,
                             evaluate_scripted_expert, read_log,
                             rolling_mean, summarize_log)
from nfdrive.harness.config import ConfigError
from nfdrive.harness.metrics import MetricsError
from nfdrive.nfrl.checkpoint import (CheckpointError, config_hash,
                                     load_checkpoint, save_checkpoint)
from nfdrive.simworld import ScriptedExpert, spawn_scenario
from nfdrive.simworld.world import EgoAction


# --------------------------------------------------------------- metrics


def test_asd_msd_constant_speed():
    asd, msd, dists = compute_asd_msd([np.full(100, 5.0)])
    assert asd == msd == pytest.approx(50.0, abs=1e-12)
    assert dists == [pytest.approx(50.0)]


def test_asd_msd_two_episodes():
    asd, msd, _ = compute_asd_msd([np.full(80, 5.0), np.full(120, 5.0)])
    assert asd == pytest.approx(50.0, abs=1e-12)
    assert msd == pytest.approx(60.0, abs=1e-12)


def test_asd_msd_matches_independent_summation():
    rng = np.random.default_rng(0)
    for _ in range(20):
        eps = [rng.uniform(0, 10, size=rng.integers(5, 80))
               for _ in range(rng.integers(1, 6))]
        asd, msd, dists = compute_asd_msd(eps)
        # independent summation: plain python loop accumulation
        ref = []
        for e in eps:
            total = 0.0
            for v in e:
                total += float(v) * 0.1
            ref.append(total)
        assert abs(asd - sum(ref) / len(ref)) <= 1e-9
        assert abs(msd - max(ref)) <= 1e-9
        for a, b in zip(dists, ref):
            assert abs(a - b) <= 1e-9


def test_asd_requires_episodes():
    with pytest.raises(MetricsError):
        compute_asd_msd([])


def test_episodes_to_baseline_examples():
    never = [10.0] * 30
    assert episodes_to_baseline(never, 50.0, window=5) is None
    series = [10.0] * 20 + [90.0] * 10
    hit = episodes_to_baseline(series, 50.0, window=5)
    # brute-force scan oracle
    expected = None
    for i in range(len(series)):
        window = series[max(0, i - 4):i + 1]
        if sum(window) / len(window) >= 50.0:
            expected = i + 1
            break
    assert hit == expected


def test_episodes_to_baseline_matches_linear_scan_random():
    rng = np.random.default_rng(1)
    for _ in range(200):
        series = rng.uniform(0, 120, size=rng.integers(1, 60)).tolist()
        w = int(rng.integers(1, 12))
        b = float(rng.uniform(20, 100))
        expected = None
        for i in range(len(series)):
            window = series[max(0, i - w + 1):i + 1]
            if sum(window) / len(window) >= b:
                expected = i + 1
                break
        assert episodes_to_baseline(series, b, w) == expected


def test_metrics_log_round_trip(tmp_path):
    path = tmp_path / "metrics.jsonl"
    for i in range(1, 6):
        append_log_record(path, {"episode": i, "distance": 10.0 * i,
                                 "steps": 7, "termination": "max_steps"})
    records = read_log(path)
    assert len(records) == 5
    s1 = summarize_log(records, window=3)
    s2 = summarize_log(read_log(path), window=3)
    assert s1 == s2
    assert s1["baselines"]["50"] is None or isinstance(s1["baselines"]["50"], int)


def test_metrics_log_rejects_gaps_and_garbage(tmp_path):
    path = tmp_path / "bad.jsonl"
    append_log_record(path, {"episode": 1, "distance": 1.0})
    append_log_record(path, {"episode": 3, "distance": 1.0})
    with pytest.raises(MetricsError):
        read_log(path)
    path2 = tmp_path / "bad2.jsonl"
    path2.write_text('{"episode": 1}\nnot json\n')
    with pytest.raises(MetricsError):
        read_log(path2)


def test_eval_report_invariants():
    with pytest.raises(ValueError):
        EvalReport(asd=5.0, msd=4.0, per_episode=[4.0, 6.0], terminations={})
    with pytest.raises(ValueError):
        EvalReport(asd=4.0, msd=6.0, per_episode=[4.0, 6.0], terminations={})
    r = EvalReport(asd=5.0, msd=6.0, per_episode=[4.0, 6.0], terminations={})
    assert r.msd >= r.asd >= 0


# --------------------------------------------------------------- config


def test_config_shaping_derivation_and_validation(tmp_path):
    assert RunConfig(method="NFRL").shaping == "f1"
    demo = tmp_path / "d.txt"
    save_demos(DemoDataset(source="scripted"), demo)
    assert RunConfig(method="NFRL+SC").shaping == "f2"
    assert RunConfig(method="NFRL+SC+Demo", demo_path=str(demo)).shaping == "f2"
    with pytest.raises(ConfigError):
        RunConfig(map_id="nowhere")
    with pytest.raises(ConfigError):
        RunConfig(method="SAC")
    with pytest.raises(ConfigError):
        RunConfig(method="BC+Demo")        # demo_path missing
    with pytest.raises(ConfigError):
        RunConfig(method="NFRL", gamma=1.5)
    with pytest.raises(ConfigError):
        RunConfig(method="NFRL", horizon=0)


def test_config_file_round_trip(tmp_path):
    cfg = RunConfig(method="NFRL", seed=9, episodes=4)
    path = tmp_path / "cfg.json"
    cfg.save(path)
    back = RunConfig.from_file(path)
    assert back == cfg
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"method": "NFRL", "bogus_field": 1})
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        RunConfig.from_file(path)


# --------------------------------------------------------------- checkpoint


def test_checkpoint_round_trip(tmp_path):
    from nfdrive.harness import build_params
    cfg = RunConfig(method="NFRL", context_dim=8, stoch_dim=4, embed_dim=8,
                    k_flows=1, enc_hidden=8, dec_hidden=8, reward_hidden=8,
                    actor_hidden=8, critic_hidden=8)
    params = build_params(cfg, seed=3)
    path = tmp_path / "ck.npz"
    save_checkpoint(path, params, cfg.to_dict())
    loaded, stored = load_checkpoint(path)
    assert stored == cfg.to_dict()
    assert sorted(loaded.names()) == sorted(params.names())
    for n in params.names():
        np.testing.assert_array_equal(loaded[n].data, params[n].data)
        assert loaded.group_of(n) == params.group_of(n)
    with pytest.raises(CheckpointError):
        load_checkpoint(path, expected_config={"different": True})
    (tmp_path / "junk.npz").write_bytes(b"not a checkpoint")
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "junk.npz")


def test_config_hash_is_order_insensitive():
    assert config_hash({"a": 1, "b": 2}) == config_hash({"b": 2, "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})


# --------------------------------------------------------------- training


def tiny_run_config(**kw):
    base = dict(method="NFRL", map_id="ring", n_traffic=0, seed=2,
                context_dim=8, stoch_dim=4, embed_dim=8, k_flows=1,
                enc_hidden=8, dec_hidden=8, reward_hidden=8, actor_hidden=8,
                critic_hidden=8, horizon=4, episodes=2, seed_episodes=1,
                update_every=100, batch_size=4, seq_length=8, max_starts=4,
                buffer_capacity=10, max_episode_steps=50, eval_episodes=2,
                bc_epochs=3)
    base.update(kw)
    return RunConfig(**base)


@pytest.mark.slow
def test_training_smoke_and_checkpoint_reload(tmp_path):
    cfg = tiny_run_config()
    result = Trainer(cfg).train(tmp_path / "run")
    records = read_log(result["log"])
    assert len(records) == cfg.episodes
    assert all(r["episode"] == i + 1 for i, r in enumerate(records))
    params, stored = load_checkpoint(result["checkpoint"])
    assert stored["method"] == "NFRL"
    r1 = evaluate_checkpoint(result["checkpoint"], None, episodes=2)
    r2 = evaluate_checkpoint(result["checkpoint"], None, episodes=2)
    assert r1.to_dict() == r2.to_dict()


@pytest.mark.slow
def test_training_determinism_same_seed(tmp_path):
    cfg = tiny_run_config()
    res_a = Trainer(cfg).train(tmp_path / "a")
    res_b = Trainer(cfg).train(tmp_path / "b")
    assert read_log(res_a["log"]) == read_log(res_b["log"])


@pytest.mark.slow
def test_bc_demo_method_trains_without_env(tmp_path):
    demo_path = tmp_path / "demos.txt"
    ds = DemoDataset(source="scripted")
    for i in range(2):
        world = spawn_scenario(seed=40 + i, n_traffic=0, map_id="ring")
        expert = ScriptedExpert()
        ds.add_episode(record_episode(world, lambda o: expert.act(world),
                                      episode_id=i, seed=40 + i,
                                      max_steps=30))
    save_demos(ds, demo_path)
    cfg = tiny_run_config(method="BC+Demo", demo_path=str(demo_path))
    result = Trainer(cfg).train(tmp_path / "run")
    assert result["episodes"] == 0          # no environment fine-tuning
    params, _ = load_checkpoint(result["checkpoint"])
    # cloned policy initialized the actor
    for n in params.names("bc"):
        np.testing.assert_array_equal(params[n].data,
                                      params["actor" + n[len("bc"):]].data)


def test_scripted_expert_asd_on_empty_ring():
    cfg = RunConfig(method="NFRL", map_id="ring", n_traffic=0, seed=1,
                    eval_episodes=2)
    report = evaluate_scripted_expert(cfg, episodes=2)
    assert report.asd >= 200.0
    assert report.msd >= report.asd


# --------------------------------------------------------------- server


class WireClient:
    open_clients: list = []

    def __init__(self, port):
        self.sock = socket.create_connection(("127.0.0.1", port), timeout=10)
        self.file = self.sock.makefile("rwb")
        WireClient.open_clients.append(self)

    def read(self) -> dict:
        line = self.file.readline()
        assert line, "connection closed"
        return json.loads(line.decode())

    def send(self, msg: dict) -> dict:
        self.file.write((json.dumps(msg) + "\n").encode())
        self.file.flush()
        return self.read()

    def close(self):
        self.file.close()
        self.sock.close()
        if self in WireClient.open_clients:
            WireClient.open_clients.remove(self)


@pytest.fixture
def wire_server(tmp_path):
    cfg = RunConfig(method="NFRL", map_id="ring", n_traffic=1, seed=4)
    record_out = tmp_path / "teleop.txt"
    server = EnvServer(cfg, port=0, record_out=str(record_out))
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield cfg, server.server_address[1], record_out
    # close any client a failed test left open, otherwise shutdown would
    # wait forever on the single-threaded handler
    for client in WireClient.open_clients:
        try:
            client.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        try:
            client.file.close()
            client.sock.close()
        except OSError:
            pass
    WireClient.open_clients.clear()
    server.shutdown()
    server.server_close()


def test_wire_matches_in_process_session(wire_server):
    cfg, port, _ = wire_server
    client = WireClient(port)
    hello = client.read()
    assert hello["type"] == "hello"
    assert hello["version"] == PROTOCOL_VERSION
    assert hello["obs_dim"] == 35 and hello["action_dim"] == 2
    assert hello["dt"] == pytest.approx(0.1)

    local = EnvSession(cfg)
    assert local.hello() == hello

    rng = np.random.default_rng(6)
    msgs = [{"type": "reset", "seed": 77}]
    for _ in range(50):
        msgs.append({"type": "step",
                     "longitudinal": float(rng.uniform(-2, 3)),
                     "steer": float(rng.uniform(-0.3, 0.3))})
    msgs.append({"type": "render"})
    for msg in msgs:
        wire_reply = client.send(msg)
        local_reply = local.handle(msg)
        assert wire_reply == json.loads(json.dumps(local_reply))
    client.close()


def test_wire_trajectory_matches_direct_world(wire_server):
    cfg, port, _ = wire_server
    client = WireClient(port)
    client.read()
    obs_reply = client.send({"type": "reset", "seed": 123})
    world = spawn_scenario(seed=123, n_traffic=cfg.n_traffic,
                           map_id=cfg.map_id)
    assert obs_reply["observation"] == world.observe().vector().tolist()
    rng = np.random.default_rng(9)
    for _ in range(30):
        lon = float(rng.uniform(-2, 3))
        steer = float(rng.uniform(-0.2, 0.2))
        reply = client.send({"type": "step", "longitudinal": lon,
                             "steer": steer})
        _, obs, _, term = world.step(EgoAction(lon, steer))
        assert reply["obs"] == obs.vector().tolist()
        assert reply["done"] == term.done
        if term.done:
            break
    client.close()


def test_server_clamps_and_reports(wire_server):
    cfg, port, _ = wire_server
    client = WireClient(port)
    client.read()
    client.send({"type": "reset", "seed": 5})
    reply = client.send({"type": "step", "longitudinal": 99.0, "steer": -7.0})
    assert reply["clamped"] is True
    assert reply["applied"] == {"longitudinal": 3.0, "steer": -1.0}
    reply = client.send({"type": "step", "longitudinal": 1.0, "steer": 0.0})
    assert reply["clamped"] is False
    client.close()


def test_server_errors_preserve_session(wire_server):
    cfg, port, _ = wire_server
    client = WireClient(port)
    client.read()
    r = client.send({"type": "step", "longitudinal": 0, "steer": 0})
    assert r["type"] == "error" and r["code"] == "no_episode"
    r = client.send({"type": "warp"})
    assert r["code"] == "unknown_type"
    client.file.write(b"{bad json\n")
    client.file.flush()
    assert client.read()["code"] == "malformed"
    # session still usable
    assert client.send({"type": "reset", "seed": 1})["type"] == "obs"
    r = client.send({"type": "step", "longitudinal": "fast", "steer": 0})
    assert r["code"] == "malformed"
    r = client.send({"type": "reset", "seed": "tomorrow"})
    assert r["code"] == "malformed"
    assert client.send({"type": "step", "longitudinal": 1,
                        "steer": 0})["type"] == "transition"
    client.close()


def test_server_version_mismatch_refused(wire_server):
    cfg, port, _ = wire_server
    client = WireClient(port)
    client.read()
    r = client.send({"type": "hello", "version": 99})
    assert r["type"] == "error" and r["code"] == "version_mismatch"
    assert client.file.readline() == b""       # connection closed
    client.close()
    # matching version is acknowledged
    c2 = WireClient(port)
    c2.read()
    assert c2.send({"type": "hello",
                    "version": PROTOCOL_VERSION})["type"] == "hello"
    c2.close()


def test_server_recording_session_replays_bit_exact(wire_server):
    cfg, port, record_out = wire_server
    client = WireClient(port)
    client.read()
    ack = client.send({"type": "record", "enabled": True})
    assert ack["type"] == "record_ack" and ack["recording"] is True
    client.send({"type": "reset", "seed": 321})
    rng = np.random.default_rng(13)
    sent = []
    steps = 0
    for _ in range(100):
        lon = float(rng.uniform(-1, 2))
        steer = float(rng.uniform(-0.2, 0.2))
        reply = client.send({"type": "step", "longitudinal": lon,
                             "steer": steer})
        sent.append((reply["applied"]["longitudinal"],
                     reply["applied"]["steer"]))
        steps += 1
        assert reply["recorded_steps"] == steps
        if reply["done"]:
            break
    client.send({"type": "record", "enabled": False})
    client.close()

    ds = load_demos(record_out)
    assert len(ds.episodes) == 1
    ep = ds.episodes[0]
    assert len(ep) == steps
    # recorded actions are the acknowledged commands, bit-exact
    for t, (lon, steer) in zip(ep.transitions, sent):
        assert t.action.tolist() == [lon, steer]
    # replay through the simulator reproduces the recorded observations
    world = spawn_scenario(seed=ep.seed, n_traffic=cfg.n_traffic,
                           map_id=cfg.map_id)
    obs = world.observe().vector()
    for t in ep.transitions:
        assert obs.tobytes() == t.observation.tobytes()
        _, nxt, _, term = world.step(EgoAction(t.action[0], t.action[1]))
        obs = nxt.vector()
        assert term.done == t.done
