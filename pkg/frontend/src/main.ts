// Browser entry point: connect to the environment server, drive at the
// server tick rate from sampled input, render the latest scene.

import { InputSource } from "./input.js";
import { PROTOCOL_VERSION } from "./protocol.js";
import { Session, SocketLike, backoffDelays } from "./session.js";
import { drawHud, drawScene } from "./render.js";

function wsUrl(): string {
  const proto = location.protocol === "https:" ? "wss" : "ws";
  return `${proto}://${location.host}/ws`;
}

function openSocket(url: string): SocketLike {
  const ws = new WebSocket(url);
  return {
    send: (d) => ws.send(d),
    close: () => ws.close(),
    set onmessage(fn: ((ev: { data: string }) => void) | null) {
      ws.onmessage = fn as never;
    },
    set onclose(fn: (() => void) | null) {
      ws.onclose = fn as never;
    },
    set onerror(fn: ((ev: unknown) => void) | null) {
      ws.onerror = fn as never;
    },
  } as SocketLike;
}

function start(): void {
  const canvas = document.getElementById("view") as HTMLCanvasElement;
  const ctx = canvas.getContext("2d")!;
  const input = new InputSource();
  input.attach(window);

  let attempt = 0;
  const connect = () => {
    const session = new Session(openSocket(wsUrl()));
    let stepTimer: ReturnType<typeof setInterval> | null = null;

    session.onUpdate = (view) => {
      if (view.state === "connected" && view.hello && stepTimer === null) {
        attempt = 0;
        session.reset();
        // one step message per server tick, input sampled at send time
        stepTimer = setInterval(() => {
          if (session.view.episodeActive) session.step(input.sample());
          session.requestScene();
        }, view.hello.dt * 1000);
      }
      if (view.state === "closed" && stepTimer !== null) {
        clearInterval(stepTimer);
        stepTimer = null;
        const delays = backoffDelays(attempt + 1);
        setTimeout(connect, delays[delays.length - 1]);
        attempt += 1;
      }
      if (view.state === "version_mismatch" && stepTimer !== null) {
        clearInterval(stepTimer);
        stepTimer = null; // no reconnect: surfaced in the HUD instead
      }
    };

    const render = () => {
      if (session.view.scene) {
        drawScene(ctx, session.view.scene, canvas.width, canvas.height);
      }
      drawHud(ctx, session.view);
      requestAnimationFrame(render);
    };
    requestAnimationFrame(render);

    window.addEventListener("keydown", (e) => {
      if (e.code === "KeyR") session.setRecording(!session.view.recording);
      if (e.code === "KeyN") session.reset();
    });
  };
  connect();
}

if (typeof document !== "undefined" && document.getElementById("view")) {
  start();
}

export { PROTOCOL_VERSION };
