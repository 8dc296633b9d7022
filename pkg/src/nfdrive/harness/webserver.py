"""WebSocket bridge for the browser teleop client.

Each websocket text frame carries exactly one protocol message, identical
to one line of the TCP transport, so both transports stay bit-equivalent.
Static frontend files are served from the directory given at startup (or
the bundled frontend build if present).
"""

from __future__ import annotations

import json
from pathlib import Path

from .config import RunConfig
from .server import EnvSession, error_reply


def create_app(config: RunConfig, record_out: str | None = None,
               static_dir: str | None = None):
    from fastapi import FastAPI, WebSocket, WebSocketDisconnect
    from fastapi.staticfiles import StaticFiles

    app = FastAPI()

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket):
        await ws.accept()
        session = EnvSession(config, record_out=record_out)
        await ws.send_text(json.dumps(session.hello()))
        try:
            while True:
                raw = await ws.receive_text()
                try:
                    msg = json.loads(raw)
                except json.JSONDecodeError as exc:
                    reply = error_reply("malformed", f"bad JSON: {exc}")
                else:
                    reply = session.handle(msg)
                await ws.send_text(json.dumps(reply))
                if reply.get("code") == "version_mismatch":
                    await ws.close()
                    break
        except WebSocketDisconnect:
            pass
        finally:
            session.close()

    static = static_dir or _default_static_dir()
    if static and Path(static).is_dir():
        app.mount("/", StaticFiles(directory=static, html=True), name="ui")
    return app


def _default_static_dir() -> str | None:
    root = Path(__file__).resolve().parents[3] / "frontend" / "dist"
    return str(root) if root.is_dir() else None


def serve_web(config: RunConfig, port: int, record_out: str | None = None,
              static_dir: str | None = None) -> None:
    import uvicorn
    app = create_app(config, record_out=record_out, static_dir=static_dir)
    uvicorn.run(app, host="127.0.0.1", port=port, log_level="warning")
