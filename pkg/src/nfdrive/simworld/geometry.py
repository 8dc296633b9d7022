"""2D geometry helpers: oriented rectangles, ray casting, polylines."""

from __future__ import annotations

import numpy as np


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    a = (a + np.pi) % (2.0 * np.pi) - np.pi
    if a == -np.pi:
        a = np.pi
    return float(a)


def rect_corners(pos: np.ndarray, heading: float, length: float, width: float) -> np.ndarray:
    """Corners of an oriented rectangle centered at pos, (4, 2), CCW."""
    c, s = np.cos(heading), np.sin(heading)
    fwd = np.array([c, s])
    left = np.array([-s, c])
    hl, hw = 0.5 * length, 0.5 * width
    return np.array([
        pos + hl * fwd + hw * left,
        pos - hl * fwd + hw * left,
        pos - hl * fwd - hw * left,
        pos + hl * fwd - hw * left,
    ])


def rects_overlap(c1: np.ndarray, c2: np.ndarray) -> bool:
    """Separating-axis test for two convex quads given as corner arrays."""
    for corners in (c1, c2):
        for i in range(4):
            edge = corners[(i + 1) % 4] - corners[i]
            axis = np.array([-edge[1], edge[0]])
            p1 = c1 @ axis
            p2 = c2 @ axis
            if p1.max() < p2.min() or p2.max() < p1.min():
                return False
    return True


def segments_of_rect(corners: np.ndarray) -> np.ndarray:
    """(4, 2, 2) array of rectangle edges."""
    return np.stack([np.stack([corners[i], corners[(i + 1) % 4]]) for i in range(4)])


def ray_segments_distance(origin: np.ndarray, direction: np.ndarray,
                          seg_a: np.ndarray, seg_b: np.ndarray,
                          max_range: float) -> float:
    """Nearest hit distance of a ray against many segments (vectorized).

    seg_a/seg_b: (N, 2) endpoints.  Returns max_range when nothing is hit.
    """
    if len(seg_a) == 0:
        return max_range
    d = direction
    e = seg_b - seg_a                     # (N, 2)
    rel = seg_a - origin                  # (N, 2)
    denom = d[0] * e[:, 1] - d[1] * e[:, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (rel[:, 0] * e[:, 1] - rel[:, 1] * e[:, 0]) / denom   # along ray
        u = (rel[:, 0] * d[1] - rel[:, 1] * d[0]) / denom         # along segment
    hit = (np.abs(denom) > 1e-12) & (t >= 0.0) & (u >= 0.0) & (u <= 1.0)
    if not hit.any():
        return max_range
    return float(min(max_range, t[hit].min()))


def polyline_segments(points: np.ndarray, closed: bool) -> tuple[np.ndarray, np.ndarray]:
    """Endpoints (A, B) of consecutive polyline segments."""
    if closed:
        a = points
        b = np.roll(points, -1, axis=0)
    else:
        a = points[:-1]
        b = points[1:]
    return a, b


def signed_lateral_offset(pos: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    """Signed perpendicular distance of pos from segment direction a->b.

    Positive when pos is left of the direction of travel.
    """
    d = b - a
    n = np.linalg.norm(d)
    if n < 1e-12:
        return 0.0
    d = d / n
    rel = pos - a
    return float(d[0] * rel[1] - d[1] * rel[0])
