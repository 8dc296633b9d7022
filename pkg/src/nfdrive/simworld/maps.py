"""Scenario layouts: closed-loop routes with lane boundaries and spawn slots.

Layouts are serializable to a small versioned text format so external
tools can define maps:

    nfdrive-layout 1
    name ring
    lane_half_width 4.0
    closed 1
    route
    <x> <y>          (one waypoint per line, ~2 m spacing)
    end
    boundary left
    <x> <y> ...
    end
    boundary right
    ...
    end
    spawns 0 5 10 ...
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

FORMAT_VERSION = 1


class LayoutError(Exception):
    pass


@dataclass
class Layout:
    name: str
    lane_half_width: float
    route: np.ndarray                 # (N, 2) waypoints
    boundary_left: np.ndarray         # (N, 2)
    boundary_right: np.ndarray        # (N, 2)
    spawn_slots: list[int] = field(default_factory=list)
    closed: bool = True

    def __post_init__(self):
        self.route = np.asarray(self.route, dtype=np.float64)
        self.boundary_left = np.asarray(self.boundary_left, dtype=np.float64)
        self.boundary_right = np.asarray(self.boundary_right, dtype=np.float64)
        if len(self.route) < 2:
            raise LayoutError("route needs at least 2 waypoints")
        deltas = np.linalg.norm(np.diff(self.route, axis=0), axis=1)
        if np.any(deltas < 1e-9):
            raise LayoutError("consecutive waypoints must be distinct")


def _resample(points: np.ndarray, spacing: float, closed: bool) -> np.ndarray:
    """Resample a curve to roughly uniform arc-length spacing."""
    pts = np.asarray(points, dtype=np.float64)
    if closed:
        pts = np.vstack([pts, pts[:1]])
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    total = s[-1]
    n = max(2, int(round(total / spacing)))
    targets = np.linspace(0.0, total, n, endpoint=not closed) if not closed else \
        np.linspace(0.0, total, n + 1)[:-1]
    out = np.empty((len(targets), 2))
    out[:, 0] = np.interp(targets, s, pts[:, 0])
    out[:, 1] = np.interp(targets, s, pts[:, 1])
    return out


def _offset_boundaries(route: np.ndarray, hw: float, closed: bool):
    n = len(route)
    left = np.empty_like(route)
    right = np.empty_like(route)
    for i in range(n):
        nxt = route[(i + 1) % n] if closed else route[min(i + 1, n - 1)]
        prv = route[(i - 1) % n] if closed else route[max(i - 1, 0)]
        d = nxt - prv
        d = d / max(np.linalg.norm(d), 1e-12)
        normal = np.array([-d[1], d[0]])
        left[i] = route[i] + hw * normal
        right[i] = route[i] - hw * normal
    return left, right


def _make_layout(name: str, centerline: np.ndarray, hw: float,
                 spacing: float = 2.0, closed: bool = True) -> Layout:
    route = _resample(centerline, spacing, closed)
    left, right = _offset_boundaries(route, hw, closed)
    spawns = list(range(0, len(route), 3))
    return Layout(name=name, lane_half_width=hw, route=route,
                  boundary_left=left, boundary_right=right,
                  spawn_slots=spawns, closed=closed)


def _ring_centerline(radius: float = 60.0, n: int = 360) -> np.ndarray:
    t = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
    return np.stack([radius * np.cos(t), radius * np.sin(t)], axis=1)


def _grid_centerline(side: float = 90.0, corner_r: float = 12.0, pts_per_arc: int = 24) -> np.ndarray:
    """Closed square circuit with 90-degree junction corners (rounded)."""
    h = side / 2.0
    r = corner_r
    pts = []
    # corner centers, CCW starting bottom-right
    centers = [(h - r, -h + r), (h - r, h - r), (-h + r, h - r), (-h + r, -h + r)]
    start_angles = [-np.pi / 2, 0.0, np.pi / 2, np.pi]
    for (cx, cy), a0 in zip(centers, start_angles):
        for a in np.linspace(a0, a0 + np.pi / 2, pts_per_arc, endpoint=False):
            pts.append((cx + r * np.cos(a), cy + r * np.sin(a)))
    return np.array(pts)


def _figure_eight_centerline(scale: float = 55.0, n: int = 480) -> np.ndarray:
    # lemniscate of Gerono, slightly scaled in y to keep curvature gentle
    t = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
    x = scale * np.sin(t)
    y = 0.8 * scale * np.sin(t) * np.cos(t)
    return np.stack([x, y], axis=1)


_BUILTIN_FACTORIES = {
    "ring": lambda: _make_layout("ring", _ring_centerline(), hw=4.0),
    "grid": lambda: _make_layout("grid", _grid_centerline(), hw=4.0),
    "figure_eight": lambda: _make_layout("figure_eight", _figure_eight_centerline(), hw=4.0),
}

_CACHE: dict[str, Layout] = {}


def builtin_layouts() -> list[str]:
    return sorted(_BUILTIN_FACTORIES)


def get_layout(map_id: str) -> Layout:
    if map_id not in _BUILTIN_FACTORIES:
        raise LayoutError(f"unknown layout {map_id!r}; built-ins: {builtin_layouts()}")
    if map_id not in _CACHE:
        _CACHE[map_id] = _BUILTIN_FACTORIES[map_id]()
    return _CACHE[map_id]


# ---- text format -------------------------------------------------------------

def dumps_layout(layout: Layout) -> str:
    lines = [f"nfdrive-layout {FORMAT_VERSION}",
             f"name {layout.name}",
             f"lane_half_width {layout.lane_half_width!r}",
             f"closed {1 if layout.closed else 0}",
             "route"]
    lines += [f"{float(x)!r} {float(y)!r}" for x, y in layout.route]
    lines.append("end")
    for tag, pts in (("left", layout.boundary_left), ("right", layout.boundary_right)):
        lines.append(f"boundary {tag}")
        lines += [f"{float(x)!r} {float(y)!r}" for x, y in pts]
        lines.append("end")
    lines.append("spawns " + " ".join(str(i) for i in layout.spawn_slots))
    return "\n".join(lines) + "\n"


def loads_layout(text: str) -> Layout:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("nfdrive-layout"):
        raise LayoutError("not a layout file")
    version = int(lines[0].split()[1])
    if version != FORMAT_VERSION:
        raise LayoutError(f"unsupported layout version {version}")
    name = ""
    hw = 0.0
    closed = True
    route: list = []
    bounds: dict[str, list] = {"left": [], "right": []}
    spawns: list[int] = []
    i = 1
    while i < len(lines):
        ln = lines[i]
        if ln.startswith("name "):
            name = ln[5:]
        elif ln.startswith("lane_half_width "):
            hw = float(ln.split()[1])
        elif ln.startswith("closed "):
            closed = ln.split()[1] == "1"
        elif ln == "route":
            i += 1
            while lines[i] != "end":
                x, y = lines[i].split()
                route.append((float(x), float(y)))
                i += 1
        elif ln.startswith("boundary "):
            tag = ln.split()[1]
            i += 1
            while lines[i] != "end":
                x, y = lines[i].split()
                bounds[tag].append((float(x), float(y)))
                i += 1
        elif ln.startswith("spawns"):
            spawns = [int(s) for s in ln.split()[1:]]
        else:
            raise LayoutError(f"unrecognized layout line: {ln!r}")
        i += 1
    return Layout(name=name, lane_half_width=hw, route=np.array(route),
                  boundary_left=np.array(bounds["left"]),
                  boundary_right=np.array(bounds["right"]),
                  spawn_slots=spawns, closed=closed)


def save_layout(layout: Layout, path) -> None:
    with open(path, "w") as f:
        f.write(dumps_layout(layout))


def load_layout(path) -> Layout:
    with open(path) as f:
        return loads_layout(f.read())
