// Connection and session state machine.  The server is the single source
// of truth: every HUD value, step count, and recording counter shown to
// the user comes from a server message, never from client-side physics.

import {
  Action,
  ClientMsg,
  HelloMsg,
  PROTOCOL_VERSION,
  SceneMsg,
  ServerMsg,
  TransitionMsg,
  clampAction,
} from "./protocol.js";

export type ConnectionState =
  | "connecting"
  | "connected"
  | "version_mismatch"
  | "closed";

export interface SocketLike {
  send(data: string): void;
  close(): void;
  onmessage: ((ev: { data: string }) => void) | null;
  onclose: (() => void) | null;
  onerror: ((ev: unknown) => void) | null;
}

export interface SessionView {
  state: ConnectionState;
  hello: HelloMsg | null;
  scene: SceneMsg | null;
  lastTransition: TransitionMsg | null;
  episodeActive: boolean;
  recording: boolean;
  recordedSteps: number;
  recordedEpisodes: number;
  truncated: boolean;       // connection dropped mid-episode
  notice: string;
}

export class Session {
  view: SessionView = {
    state: "connecting",
    hello: null,
    scene: null,
    lastTransition: null,
    episodeActive: false,
    recording: false,
    recordedSteps: 0,
    recordedEpisodes: 0,
    truncated: false,
    notice: "",
  };
  onUpdate: (view: SessionView) => void = () => {};
  private socket: SocketLike;

  constructor(socket: SocketLike) {
    this.socket = socket;
    socket.onmessage = (ev) => this.handle(JSON.parse(ev.data) as ServerMsg);
    socket.onclose = () => this.handleClose();
    socket.onerror = () => this.handleClose();
  }

  private send(msg: ClientMsg): void {
    this.socket.send(JSON.stringify(msg));
  }

  reset(seed?: number): void {
    this.send(seed === undefined ? { type: "reset" } : { type: "reset", seed });
  }

  step(action: Action): void {
    const a = clampAction(action);
    this.send({ type: "step", ...a });
  }

  requestScene(): void {
    this.send({ type: "render" });
  }

  setRecording(enabled: boolean): void {
    if (!this.view.episodeActive && enabled) {
      this.view.notice = "start an episode before recording";
    }
    this.send({ type: "record", enabled });
  }

  close(): void {
    this.socket.close();
  }

  private handle(msg: ServerMsg): void {
    const v = this.view;
    switch (msg.type) {
      case "hello":
        if (msg.version !== PROTOCOL_VERSION) {
          v.state = "version_mismatch";
          v.notice = `server speaks protocol ${msg.version}, client ${PROTOCOL_VERSION}`;
          this.socket.close();
          break;
        }
        v.state = "connected";
        v.hello = msg;
        break;
      case "obs":
        v.episodeActive = true;
        v.truncated = false;
        v.lastTransition = null;
        break;
      case "transition":
        v.lastTransition = msg;
        v.episodeActive = !msg.done;
        if (msg.recorded_steps !== undefined) {
          // counter is the server's, never incremented locally
          v.recordedSteps = msg.recorded_steps;
        }
        break;
      case "scene":
        v.scene = msg;
        break;
      case "record_ack":
        v.recording = msg.recording;
        v.recordedEpisodes = msg.episodes;
        v.recordedSteps = msg.steps;
        break;
      case "error":
        if (msg.code === "version_mismatch") {
          v.state = "version_mismatch";
        }
        v.notice = `${msg.code}: ${msg.detail}`;
        break;
    }
    this.onUpdate(v);
  }

  private handleClose(): void {
    const v = this.view;
    if (v.state !== "version_mismatch") {
      v.state = "closed";
    }
    if (v.episodeActive) {
      // mirror of the server-side truncation mark for the dropped episode
      v.truncated = true;
      v.episodeActive = false;
    }
    this.onUpdate(v);
  }
}

export interface RetryPolicy {
  baseMs: number;
  maxMs: number;
}

export function backoffDelays(attempts: number, policy: RetryPolicy = { baseMs: 500, maxMs: 8000 }): number[] {
  const out: number[] = [];
  for (let i = 0; i < attempts; i++) {
    out.push(Math.min(policy.maxMs, policy.baseMs * 2 ** i));
  }
  return out;
}
