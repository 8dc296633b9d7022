// Wire protocol spoken by the environment server.  One JSON object per
// websocket text frame; the TCP transport carries the same objects one
// per line, so the two stay byte-equivalent.

export const PROTOCOL_VERSION = 1;

export const ACTION_LOW = { longitudinal: -8, steer: -1 } as const;
export const ACTION_HIGH = { longitudinal: 3, steer: 1 } as const;

export interface Action {
  longitudinal: number;
  steer: number;
}

export interface HelloMsg {
  type: "hello";
  version: number;
  obs_dim: number;
  action_dim: number;
  dt: number;
  map_id: string;
  max_steps: number;
}

export interface ObsMsg {
  type: "obs";
  observation: number[];
  episode: number;
  seed: number;
}

export interface TransitionMsg {
  type: "transition";
  obs: number[];
  reward: number;
  reward_terms: Record<string, number>;
  done: boolean;
  reason: string;
  clamped: boolean;
  applied: Action;
  recorded_steps?: number;
}

export interface SceneEntity {
  kind: "ego" | "traffic";
  x: number;
  y: number;
  heading: number;
  speed: number;
  length: number;
  width: number;
}

export interface SceneMsg {
  type: "scene";
  entities: SceneEntity[];
  route: [number, number][];
  lane_half_width: number;
  hud: {
    speed: number;
    distance: number;
    step: number;
    reward: number;
    reward_terms: Record<string, number>;
    done: boolean;
    reason: string;
  };
}

export interface RecordAckMsg {
  type: "record_ack";
  recording: boolean;
  episodes: number;
  steps: number;
}

export interface ErrorMsg {
  type: "error";
  code: string;
  detail: string;
}

export type ServerMsg =
  | HelloMsg
  | ObsMsg
  | TransitionMsg
  | SceneMsg
  | RecordAckMsg
  | ErrorMsg;

export type ClientMsg =
  | { type: "hello"; version: number }
  | { type: "reset"; seed?: number }
  | ({ type: "step" } & Action)
  | { type: "render" }
  | { type: "record"; enabled: boolean };

export function clampAction(a: Action): Action {
  const clamp = (v: number, lo: number, hi: number) =>
    Number.isFinite(v) ? Math.min(hi, Math.max(lo, v)) : 0;
  return {
    longitudinal: clamp(a.longitudinal, ACTION_LOW.longitudinal, ACTION_HIGH.longitudinal),
    steer: clamp(a.steer, ACTION_LOW.steer, ACTION_HIGH.steer),
  };
}
