import { describe, expect, it } from "vitest";
import { Session, SocketLike, backoffDelays } from "../src/session.js";
import { PROTOCOL_VERSION, ServerMsg } from "../src/protocol.js";

class MockSocket implements SocketLike {
  sent: Record<string, unknown>[] = [];
  closed = false;
  onmessage: ((ev: { data: string }) => void) | null = null;
  onclose: (() => void) | null = null;
  onerror: ((ev: unknown) => void) | null = null;

  send(data: string): void {
    this.sent.push(JSON.parse(data));
  }

  close(): void {
    this.closed = true;
    this.onclose?.();
  }

  deliver(msg: ServerMsg | Record<string, unknown>): void {
    this.onmessage?.({ data: JSON.stringify(msg) });
  }
}

const hello = (version = PROTOCOL_VERSION) => ({
  type: "hello", version, obs_dim: 35, action_dim: 2, dt: 0.1,
  map_id: "ring", max_steps: 500,
});

function connected(): [Session, MockSocket] {
  const sock = new MockSocket();
  const session = new Session(sock);
  sock.deliver(hello());
  return [session, sock];
}

describe("handshake", () => {
  it("connects on a matching protocol version", () => {
    const [session] = connected();
    expect(session.view.state).toBe("connected");
    expect(session.view.hello?.obs_dim).toBe(35);
  });

  it("surfaces a version mismatch and closes, no silent degradation", () => {
    const sock = new MockSocket();
    const session = new Session(sock);
    sock.deliver(hello(99));
    expect(session.view.state).toBe("version_mismatch");
    expect(session.view.notice).toContain("99");
    expect(sock.closed).toBe(true);
    // the closed socket must not flip the surfaced state back to plain closed
    expect(session.view.state).toBe("version_mismatch");
  });

  it("also honors a server-side version_mismatch error reply", () => {
    const [session, sock] = connected();
    sock.deliver({ type: "error", code: "version_mismatch", detail: "nope" });
    expect(session.view.state).toBe("version_mismatch");
  });
});

describe("driving", () => {
  it("clamps outgoing actions at device extremes", () => {
    const [session, sock] = connected();
    session.step({ longitudinal: 99, steer: -42 });
    expect(sock.sent.at(-1)).toEqual({ type: "step", longitudinal: 3, steer: -1 });
    session.step({ longitudinal: -100, steer: 0.5 });
    expect(sock.sent.at(-1)).toEqual({ type: "step", longitudinal: -8, steer: 0.5 });
  });

  it("tracks episode state from server transitions only", () => {
    const [session, sock] = connected();
    session.reset(7);
    expect(sock.sent.at(-1)).toEqual({ type: "reset", seed: 7 });
    sock.deliver({ type: "obs", observation: [], episode: 1, seed: 7 });
    expect(session.view.episodeActive).toBe(true);
    sock.deliver({
      type: "transition", obs: [], reward: 0.5, reward_terms: {},
      done: true, reason: "collision", clamped: false,
      applied: { longitudinal: 1, steer: 0 },
    });
    expect(session.view.episodeActive).toBe(false);
    expect(session.view.lastTransition?.reason).toBe("collision");
  });
});

describe("recording counters", () => {
  it("mirrors server acks exactly and never counts locally", () => {
    const [session, sock] = connected();
    session.setRecording(true);
    expect(sock.sent.at(-1)).toEqual({ type: "record", enabled: true });
    sock.deliver({ type: "record_ack", recording: true, episodes: 0, steps: 0 });
    expect(session.view.recording).toBe(true);

    sock.deliver({ type: "obs", observation: [], episode: 1, seed: 1 });
    for (let i = 1; i <= 5; i++) {
      sock.deliver({
        type: "transition", obs: [], reward: 0, reward_terms: {},
        done: false, reason: "none", clamped: false,
        applied: { longitudinal: 0, steer: 0 }, recorded_steps: i,
      });
      expect(session.view.recordedSteps).toBe(i);
    }
    sock.deliver({ type: "record_ack", recording: false, episodes: 1, steps: 0 });
    expect(session.view.recording).toBe(false);
    expect(session.view.recordedEpisodes).toBe(1);
  });
});

describe("fault handling", () => {
  it("marks a dropped mid-episode connection as truncated", () => {
    const [session, sock] = connected();
    sock.deliver({ type: "obs", observation: [], episode: 1, seed: 1 });
    sock.onclose?.();
    expect(session.view.state).toBe("closed");
    expect(session.view.truncated).toBe(true);
    expect(session.view.episodeActive).toBe(false);
  });

  it("keeps the session usable after a server error reply", () => {
    const [session, sock] = connected();
    sock.deliver({ type: "error", code: "no_episode", detail: "reset first" });
    expect(session.view.state).toBe("connected");
    expect(session.view.notice).toContain("no_episode");
    session.reset();
    expect(sock.sent.at(-1)).toEqual({ type: "reset" });
  });

  it("uses capped exponential backoff for reconnects", () => {
    expect(backoffDelays(5)).toEqual([500, 1000, 2000, 4000, 8000]);
    expect(backoffDelays(7).at(-1)).toBe(8000);
  });
});
