// Top-down canvas rendering of the latest scene message plus a telemetry
// HUD.  Pure projection of server state; nothing here advances physics.

import { SceneMsg } from "./protocol.js";
import { SessionView } from "./session.js";

const ROUTE_COLOR = "#2d6cdf";
const LANE_COLOR = "#3a3f47";
const EGO_COLOR = "#3bd16f";
const TRAFFIC_COLOR = "#e2574c";

export function drawScene(ctx: CanvasRenderingContext2D, scene: SceneMsg,
                          width: number, height: number): void {
  ctx.fillStyle = "#15181d";
  ctx.fillRect(0, 0, width, height);

  const ego = scene.entities.find((e) => e.kind === "ego");
  const cx = ego ? ego.x : 0;
  const cy = ego ? ego.y : 0;
  const scale = 6; // pixels per meter, ego-centered view

  const toPx = (x: number, y: number): [number, number] =>
    [width / 2 + (x - cx) * scale, height / 2 - (y - cy) * scale];

  // lane band then centerline
  ctx.strokeStyle = LANE_COLOR;
  ctx.lineWidth = 2 * scene.lane_half_width * scale;
  ctx.lineCap = "round";
  strokeRoute(ctx, scene.route, toPx);
  ctx.strokeStyle = ROUTE_COLOR;
  ctx.lineWidth = 2;
  strokeRoute(ctx, scene.route, toPx);

  for (const e of scene.entities) {
    const [px, py] = toPx(e.x, e.y);
    ctx.save();
    ctx.translate(px, py);
    ctx.rotate(-e.heading);
    ctx.fillStyle = e.kind === "ego" ? EGO_COLOR : TRAFFIC_COLOR;
    ctx.fillRect(-e.length * scale / 2, -e.width * scale / 2,
                 e.length * scale, e.width * scale);
    ctx.restore();
  }
}

function strokeRoute(ctx: CanvasRenderingContext2D,
                     route: [number, number][],
                     toPx: (x: number, y: number) => [number, number]): void {
  if (route.length < 2) return;
  ctx.beginPath();
  const [x0, y0] = toPx(route[0][0], route[0][1]);
  ctx.moveTo(x0, y0);
  for (const [x, y] of route.slice(1)) {
    const [px, py] = toPx(x, y);
    ctx.lineTo(px, py);
  }
  ctx.stroke();
}

export function hudLines(view: SessionView): string[] {
  const lines: string[] = [];
  lines.push(`connection: ${view.state}`);
  if (view.hello) {
    lines.push(`map: ${view.hello.map_id}  dt: ${view.hello.dt}s`);
  }
  const hud = view.scene?.hud;
  if (hud) {
    lines.push(`speed: ${hud.speed.toFixed(2)} m/s`);
    lines.push(`distance: ${hud.distance.toFixed(1)} m  step: ${hud.step}`);
    lines.push(`reward: ${hud.reward.toFixed(3)}`);
    const t = hud.reward_terms;
    if (t && Object.keys(t).length > 0) {
      lines.push(`ttc penalties  front: ${t.r_ft ?? 0}  lateral: ${t.r_lt ?? 0}`);
    }
    if (hud.done) lines.push(`episode over: ${hud.reason}`);
  }
  lines.push(view.recording
    ? `REC episode ${view.recordedEpisodes + 1}, ${view.recordedSteps} steps`
    : `recorded episodes: ${view.recordedEpisodes}`);
  if (view.truncated) lines.push("episode truncated (connection lost)");
  if (view.notice) lines.push(view.notice);
  return lines;
}

export function drawHud(ctx: CanvasRenderingContext2D, view: SessionView): void {
  ctx.font = "13px monospace";
  ctx.fillStyle = "#e8e8e8";
  hudLines(view).forEach((line, i) => ctx.fillText(line, 12, 20 + 16 * i));
}
