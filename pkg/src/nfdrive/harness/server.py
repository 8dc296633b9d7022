"""Environment service: a transport-agnostic session plus a newline-JSON
TCP front end.  The teleop UI and external agents drive the simulator
through this protocol; recording is server-authoritative."""

from __future__ import annotations

import json
import socketserver
from dataclasses import asdict

import numpy as np

from ..demos import DemoDataset, DemoEpisode, DemoTransition, save as save_demos
from ..safety import TtcThresholds, compute_step_reward
from ..simworld.world import (ACTION_DIM, DT, MAX_STEPS, OBS_DIM, EgoAction,
                              World, spawn_scenario)
from .config import RunConfig
from .metrics import episode_distance

PROTOCOL_VERSION = 1


class ProtocolError(Exception):
    def __init__(self, code: str, detail: str):
        super().__init__(detail)
        self.code = code
        self.detail = detail


def error_reply(code: str, detail: str) -> dict:
    return {"type": "error", "code": code, "detail": detail}


class EnvSession:
    """One interactive environment session; transport supplied elsewhere.

    Every message is a dict with a "type" field; every reply is a dict.
    Malformed messages produce an error reply and leave the session usable.
    """

    def __init__(self, config: RunConfig, record_out: str | None = None):
        self.config = config
        self.record_out = record_out
        self.world: World | None = None
        self.done = True
        self.done_reason = "none"
        self.episode_index = 0
        self.step_index = 0
        self.last_obs: np.ndarray | None = None
        self.last_reward = 0.0
        self.last_terms: dict = {}
        self.distance = 0.0
        self.speeds: list[float] = []
        self.thresholds = TtcThresholds()
        self.recording = False
        self.dataset = DemoDataset(source="human_teleop")
        self._episode: DemoEpisode | None = None
        self._episode_seed: int | None = None

    def hello(self) -> dict:
        return {"type": "hello", "version": PROTOCOL_VERSION,
                "obs_dim": OBS_DIM, "action_dim": ACTION_DIM, "dt": DT,
                "map_id": self.config.map_id,
                "max_steps": self.config.max_episode_steps}

    # ------------------------------------------------------------ handlers

    def handle(self, msg) -> dict:
        if not isinstance(msg, dict) or "type" not in msg:
            return error_reply("malformed", "message must be an object with a type")
        kind = msg["type"]
        try:
            if kind == "hello":
                return self._handle_hello(msg)
            if kind == "reset":
                return self._handle_reset(msg)
            if kind == "step":
                return self._handle_step(msg)
            if kind == "render":
                return self._handle_render()
            if kind == "record":
                return self._handle_record(msg)
            return error_reply("unknown_type", f"unknown message type {kind!r}")
        except ProtocolError as exc:
            return error_reply(exc.code, exc.detail)

    def _handle_hello(self, msg) -> dict:
        if msg.get("version") != PROTOCOL_VERSION:
            raise ProtocolError(
                "version_mismatch",
                f"server speaks version {PROTOCOL_VERSION}, "
                f"client sent {msg.get('version')!r}")
        return self.hello()

    def _handle_reset(self, msg) -> dict:
        self._close_recording_episode()
        seed = msg.get("seed")
        if seed is None:
            seed = self.config.seed * 100000 + 700000 + self.episode_index
        if not isinstance(seed, int):
            raise ProtocolError("malformed", "seed must be an integer")
        self.world = spawn_scenario(seed=seed,
                                    n_traffic=self.config.n_traffic,
                                    map_id=self.config.map_id)
        self.done = False
        self.done_reason = "none"
        self.episode_index += 1
        self.step_index = 0
        self.distance = 0.0
        self.speeds = []
        self.last_reward = 0.0
        self.last_terms = {}
        self.last_obs = self.world.observe().vector()
        self._episode_seed = seed
        if self.recording:
            self._open_recording_episode()
        return {"type": "obs", "observation": self.last_obs.tolist(),
                "episode": self.episode_index, "seed": seed}

    def _handle_step(self, msg) -> dict:
        if self.world is None:
            raise ProtocolError("no_episode", "reset before stepping")
        if self.done:
            raise ProtocolError("episode_over",
                                f"episode ended ({self.done_reason}); reset")
        try:
            lon = float(msg["longitudinal"])
            steer = float(msg["steer"])
        except (KeyError, TypeError, ValueError):
            raise ProtocolError("malformed",
                                "step needs numeric longitudinal and steer")
        if not (np.isfinite(lon) and np.isfinite(steer)):
            raise ProtocolError("malformed", "actions must be finite")
        action = EgoAction(longitudinal=lon, steer=steer)
        clamped = (action.longitudinal != lon) or (action.steer != steer)
        prev_obs = self.last_obs
        _, obs, info, term = self.world.step(action)
        # teleoperation has no policy prediction: applied steering is its
        # own reference, so the smoothness indicator never fires
        reward, terms = compute_step_reward(info, self.thresholds,
                                            info.steer_applied,
                                            shaping=self.config.shaping)
        self.last_obs = obs.vector()
        self.last_reward = reward
        self.last_terms = {k: float(v) for k, v in asdict(terms).items()}
        self.done = term.done
        self.done_reason = term.reason
        self.speeds.append(self.world.ego.speed)
        self.distance = episode_distance(self.speeds)
        if self._episode is not None:
            self._episode.transitions.append(DemoTransition(
                observation=prev_obs,
                action=np.array([action.longitudinal, action.steer]),
                reward=reward, done=term.done, step=self.step_index))
        self.step_index += 1
        if self.done:
            self._close_recording_episode()
        reply = {"type": "transition", "obs": self.last_obs.tolist(),
                 "reward": reward, "reward_terms": self.last_terms,
                 "done": self.done, "reason": term.reason,
                 "clamped": clamped,
                 "applied": {"longitudinal": action.longitudinal,
                             "steer": action.steer}}
        if self.recording:
            reply["recorded_steps"] = self.step_index
        return reply

    def _handle_render(self) -> dict:
        if self.world is None:
            raise ProtocolError("no_episode", "reset before rendering")
        ego = self.world.ego
        entities = [{"kind": "ego", "x": float(ego.position[0]),
                     "y": float(ego.position[1]),
                     "heading": float(ego.heading),
                     "speed": float(ego.speed),
                     "length": ego.length, "width": ego.width}]
        for tv in self.world.traffic:
            s = tv.state
            entities.append({"kind": "traffic", "x": float(s.position[0]),
                             "y": float(s.position[1]),
                             "heading": float(s.heading),
                             "speed": float(s.speed),
                             "length": s.length, "width": s.width})
        return {"type": "scene", "entities": entities,
                "route": self.world.route.waypoints.tolist(),
                "lane_half_width": self.world.layout.lane_half_width,
                "hud": {"speed": float(ego.speed),
                        "distance": self.distance,
                        "step": self.step_index,
                        "reward": self.last_reward,
                        "reward_terms": self.last_terms,
                        "done": self.done, "reason": self.done_reason}}

    def _handle_record(self, msg) -> dict:
        enabled = msg.get("enabled")
        if not isinstance(enabled, bool):
            raise ProtocolError("malformed", "record needs boolean enabled")
        if enabled and not self.recording:
            self.recording = True
            if self.world is not None and not self.done:
                self._open_recording_episode()
        elif not enabled and self.recording:
            self._close_recording_episode(truncated=not self.done)
            self.recording = False
        return {"type": "record_ack", "recording": self.recording,
                "episodes": len(self.dataset.episodes),
                "steps": len(self._episode.transitions) if self._episode else 0}

    # ------------------------------------------------------------ recording

    def _open_recording_episode(self) -> None:
        self._episode = DemoEpisode(episode_id=len(self.dataset.episodes),
                                    seed=self._episode_seed)

    def _close_recording_episode(self, truncated: bool = False) -> None:
        if self._episode is None:
            return
        if len(self._episode):
            self._episode.truncated = truncated or not self.done
            self.dataset.add_episode(self._episode)
            if self.record_out:
                save_demos(self.dataset, self.record_out)
        self._episode = None

    def close(self) -> None:
        self._close_recording_episode(truncated=True)


class _LineHandler(socketserver.StreamRequestHandler):
    def handle(self):
        session = EnvSession(self.server.run_config,
                             record_out=self.server.record_out)
        self.wfile.write((json.dumps(session.hello()) + "\n").encode())
        try:
            for raw in self.rfile:
                line = raw.decode().strip()
                if not line:
                    continue
                try:
                    msg = json.loads(line)
                except json.JSONDecodeError as exc:
                    reply = error_reply("malformed", f"bad JSON: {exc}")
                else:
                    reply = session.handle(msg)
                self.wfile.write((json.dumps(reply) + "\n").encode())
                if reply.get("code") == "version_mismatch":
                    break                     # connection refused with reason
        finally:
            session.close()


class EnvServer(socketserver.TCPServer):
    """One interactive session at a time, newline-delimited JSON."""
    allow_reuse_address = True

    def __init__(self, config: RunConfig, port: int,
                 record_out: str | None = None, host: str = "127.0.0.1"):
        self.run_config = config
        self.record_out = record_out
        super().__init__((host, port), _LineHandler)


def serve(config: RunConfig, port: int, record_out: str | None = None) -> None:
    with EnvServer(config, port, record_out=record_out) as server:
        server.serve_forever()
