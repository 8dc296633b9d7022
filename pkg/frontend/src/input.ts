// Device input -> action mapping.  Keyboard is a digital fallback hitting
// the exact range endpoints; gamepad pedals/stick map linearly onto
// longitudinal [-8, 3] and steer [-1, 1].  Everything is clamped and a
// lost device yields the neutral (0, 0) action.

import { Action, clampAction } from "./protocol.js";

export interface KeyboardState {
  accelerate: boolean; // W / ArrowUp
  brake: boolean;      // S / ArrowDown
  left: boolean;       // ArrowLeft / A
  right: boolean;      // ArrowRight / D
}

export const NEUTRAL: Action = { longitudinal: 0, steer: 0 };

export function keyboardAction(keys: KeyboardState): Action {
  // brake wins over accelerate; opposing steer keys cancel
  const longitudinal = keys.brake ? -8 : keys.accelerate ? 3 : 0;
  const steer = (keys.right ? 1 : 0) - (keys.left ? 1 : 0);
  return clampAction({ longitudinal, steer });
}

export interface GamepadState {
  connected: boolean;
  steerAxis: number;   // [-1, 1], left negative
  throttle: number;    // [0, 1] accelerator pedal / trigger
  brake: number;       // [0, 1] brake pedal / trigger
}

export function gamepadAction(pad: GamepadState): Action {
  if (!pad.connected) return { ...NEUTRAL };
  // pedals can report slightly outside [0, 1]; clamp before mapping
  const throttle = Math.min(1, Math.max(0, pad.throttle));
  const brake = Math.min(1, Math.max(0, pad.brake));
  // linear pedal maps: throttle [0,1] -> [0,3], brake [0,1] -> [0,-8];
  // any brake pressure overrides the throttle
  const longitudinal = brake > 0 ? -8 * brake : 3 * throttle;
  return clampAction({ longitudinal, steer: pad.steerAxis });
}

const TRACKED_KEYS: Record<string, keyof KeyboardState> = {
  KeyW: "accelerate",
  ArrowUp: "accelerate",
  KeyS: "brake",
  ArrowDown: "brake",
  KeyA: "left",
  ArrowLeft: "left",
  KeyD: "right",
  ArrowRight: "right",
};

export class InputSource {
  keys: KeyboardState = { accelerate: false, brake: false, left: false, right: false };
  private gamepadIndex: number | null = null;

  attach(target: Pick<Window, "addEventListener">): void {
    target.addEventListener("keydown", (e) => this.onKey(e as KeyboardEvent, true));
    target.addEventListener("keyup", (e) => this.onKey(e as KeyboardEvent, false));
    target.addEventListener("gamepadconnected", (e) => {
      this.gamepadIndex = (e as GamepadEvent).gamepad.index;
    });
    target.addEventListener("gamepaddisconnected", (e) => {
      if (this.gamepadIndex === (e as GamepadEvent).gamepad.index) {
        this.gamepadIndex = null;
      }
    });
    target.addEventListener("blur", () => this.releaseAll());
  }

  onKey(e: KeyboardEvent, down: boolean): void {
    const field = TRACKED_KEYS[e.code];
    if (field !== undefined) {
      this.keys[field] = down;
      e.preventDefault?.();
    }
  }

  releaseAll(): void {
    this.keys = { accelerate: false, brake: false, left: false, right: false };
  }

  get usingGamepad(): boolean {
    return this.gamepadIndex !== null;
  }

  /** Sample the current action; called once per step message. */
  sample(getGamepads: () => (Gamepad | null)[] = () =>
           (typeof navigator !== "undefined" ? navigator.getGamepads() : [])): Action {
    if (this.gamepadIndex !== null) {
      const pad = getGamepads()[this.gamepadIndex];
      if (!pad) return { ...NEUTRAL }; // device lost between events
      return gamepadAction({
        connected: pad.connected,
        steerAxis: pad.axes[0] ?? 0,
        throttle: pad.buttons[7]?.value ?? 0,
        brake: pad.buttons[6]?.value ?? 0,
      });
    }
    return keyboardAction(this.keys);
  }
}
