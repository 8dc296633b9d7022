"""Scripted lane-follow controllers for traffic vehicles."""

from __future__ import annotations

import numpy as np

from .world import (ACCEL_MAX, ACCEL_MIN, MAX_WHEEL_ANGLE, WHEELBASE,
                    TrafficVehicle, nearest_waypoint_index)

LOOKAHEAD = 6.0          # meters
FOLLOW_GAP = 10.0        # slow down when a vehicle is closer than this ahead


def pure_pursuit_steer(position: np.ndarray, heading: float,
                       waypoints: np.ndarray, lookahead: float = LOOKAHEAD) -> float:
    """Normalized steer command toward a lookahead point on the route."""
    k = nearest_waypoint_index(waypoints, position)
    n = len(waypoints)
    target = waypoints[k]
    for j in range(1, n):
        target = waypoints[(k + j) % n]
        if np.linalg.norm(target - position) >= lookahead:
            break
    rel = target - position
    dist = max(np.linalg.norm(rel), 1e-9)
    alpha = np.arctan2(rel[1], rel[0]) - heading
    curvature = 2.0 * np.sin(alpha) / dist
    wheel = np.arctan(WHEELBASE * curvature)
    return float(np.clip(wheel / MAX_WHEEL_ANGLE, -1.0, 1.0))


def traffic_control(tv: TrafficVehicle, waypoints: np.ndarray,
                    all_traffic: list[TrafficVehicle]) -> tuple[float, float]:
    """(accel, steer) for one scripted vehicle: pure pursuit + car following."""
    steer = pure_pursuit_steer(tv.state.position, tv.state.heading, waypoints)

    # simple headway keeping against the nearest vehicle ahead
    fwd = np.array([np.cos(tv.state.heading), np.sin(tv.state.heading)])
    gap = np.inf
    for other in all_traffic:
        if other is tv:
            continue
        rel = other.state.position - tv.state.position
        ahead = float(rel @ fwd)
        if 0.0 < ahead < gap and abs(fwd[0] * rel[1] - fwd[1] * rel[0]) < 3.0:
            gap = ahead
    if gap < FOLLOW_GAP:
        accel = ACCEL_MIN * 0.5
    else:
        accel = float(np.clip(2.0 * (tv.target_speed - tv.state.speed),
                              ACCEL_MIN, ACCEL_MAX))
    return accel, steer
