"""Deterministic 2D multi-vehicle driving world.

Kinematic-bicycle ego motion, scripted pure-pursuit traffic on a shared
route, ray-cast observations, and episode termination accounting.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import geometry as geo
from .maps import Layout, get_layout

DT = 0.1                      # seconds per step
N_RAYS = 32
MAX_RAY_RANGE = 40.0          # meters
WHEELBASE = 2.5               # meters
MAX_WHEEL_ANGLE = np.deg2rad(35.0)
VEHICLE_LENGTH = 4.0
VEHICLE_WIDTH = 1.8
MAX_STEPS = 500
STUCK_SPEED = 0.05            # m/s
STUCK_SECONDS = 50.0
LATERAL_DEVIATION_BUDGET = 10.0
ACCEL_MIN, ACCEL_MAX = -8.0, 3.0
STEER_MIN, STEER_MAX = -1.0, 1.0

OBS_DIM = N_RAYS + 3          # ranges + speed + relative heading + lateral offset
ACTION_DIM = 2


class SimError(Exception):
    pass


@dataclass
class VehicleState:
    position: np.ndarray          # (2,) meters, world frame
    heading: float                # radians, wrapped to (-pi, pi]
    speed: float                  # m/s, >= 0
    length: float = VEHICLE_LENGTH
    width: float = VEHICLE_WIDTH

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64)
        self.heading = geo.wrap_angle(self.heading)
        self.speed = max(0.0, float(self.speed))

    @property
    def velocity(self) -> np.ndarray:
        return self.speed * np.array([np.cos(self.heading), np.sin(self.heading)])

    def corners(self) -> np.ndarray:
        return geo.rect_corners(self.position, self.heading, self.length, self.width)

    def copy(self) -> "VehicleState":
        return VehicleState(self.position.copy(), self.heading, self.speed,
                            self.length, self.width)


@dataclass
class EgoAction:
    longitudinal: float           # m/s^2, clamped to [-8, 3]
    steer: float                  # dimensionless, clamped to [-1, 1]

    def __post_init__(self):
        self.longitudinal = float(np.clip(self.longitudinal, ACCEL_MIN, ACCEL_MAX))
        self.steer = float(np.clip(self.steer, STEER_MIN, STEER_MAX))


@dataclass
class Route:
    waypoints: np.ndarray         # (N, 2), ~2 m spacing
    lane_half_width: float

    def __post_init__(self):
        self.waypoints = np.asarray(self.waypoints, dtype=np.float64)
        if len(self.waypoints) < 2:
            raise SimError("route needs at least 2 waypoints")
        if np.any(np.linalg.norm(np.diff(self.waypoints, axis=0), axis=1) < 1e-9):
            raise SimError("consecutive waypoints must be distinct")

    def __len__(self):
        return len(self.waypoints)


@dataclass
class Observation:
    ranges: np.ndarray            # (N_RAYS,) meters in [0, MAX_RAY_RANGE]
    speed: float
    rel_heading: float            # radians, heading relative to route direction
    lateral_offset: float         # meters, signed (left positive)

    def vector(self) -> np.ndarray:
        return np.concatenate([self.ranges,
                               [self.speed, self.rel_heading, self.lateral_offset]])

    @staticmethod
    def from_vector(v: np.ndarray) -> "Observation":
        v = np.asarray(v, dtype=np.float64)
        return Observation(ranges=v[:N_RAYS], speed=float(v[N_RAYS]),
                           rel_heading=float(v[N_RAYS + 1]),
                           lateral_offset=float(v[N_RAYS + 2]))


@dataclass
class Termination:
    reason: str = "none"          # collision | max_steps | route_complete |
                                  # lateral_deviation | stuck | none

    @property
    def done(self) -> bool:
        return self.reason != "none"


@dataclass
class TrafficVehicle:
    state: VehicleState
    route_index: int              # nearest waypoint on the shared loop
    target_speed: float


@dataclass
class StepInfo:
    """Raw per-step quantities consumed by the safety/reward engine."""
    ego_position: np.ndarray
    ego_heading: float
    ego_velocity: np.ndarray
    v_lon: float
    steer_command: float          # raw commanded steer in [-1, 1]
    steer_applied: float          # wheel angle actually applied, radians
    collision: bool
    out_of_lane: bool
    lateral_offset: float
    nearest_wp: np.ndarray
    next_wp: np.ndarray
    traffic: list                 # list of VehicleState snapshots


def nearest_waypoints(route: Route, pos) -> tuple[np.ndarray, np.ndarray]:
    """Closest waypoint and its successor; ties break toward lower index."""
    pos = np.asarray(pos, dtype=np.float64)
    d2 = np.sum((route.waypoints - pos) ** 2, axis=1)
    k = int(np.argmin(d2))       # argmin returns the first (lowest) index on ties
    if k >= len(route) - 1:
        return route.waypoints[-2], route.waypoints[-1]
    return route.waypoints[k], route.waypoints[k + 1]


def nearest_waypoint_index(waypoints: np.ndarray, pos: np.ndarray) -> int:
    return int(np.argmin(np.sum((waypoints - pos) ** 2, axis=1)))


def kinematic_update(v: VehicleState, a: EgoAction, dt: float = DT,
                     wheelbase: float = WHEELBASE) -> VehicleState:
    """Kinematic-bicycle step; speed floored at zero (no reverse)."""
    wheel = a.steer * MAX_WHEEL_ANGLE
    heading = geo.wrap_angle(v.heading + (v.speed / wheelbase) * np.tan(wheel) * dt)
    speed = max(0.0, v.speed + a.longitudinal * dt)
    direction = np.array([np.cos(heading), np.sin(heading)])
    position = v.position + speed * dt * direction
    return VehicleState(position, heading, speed, v.length, v.width)


class World:
    """Mutable simulation state for one episode.

    Pure function of (seed, n_traffic, map_id) at spawn and of the action
    stream thereafter: identical inputs give bit-identical trajectories.
    """

    def __init__(self, layout: Layout, route: Route, ego: VehicleState,
                 traffic: list[TrafficVehicle], seed: int):
        self.layout = layout
        self.route = route
        self.ego = ego
        self.traffic = traffic
        self.seed = seed
        self.step_index = 0
        self.stationary_clock = 0.0
        self.cumulative_lateral_deviation = 0.0
        self.collision_count = 0
        self.progress_index = 0
        self.termination = Termination()
        self._boundary_segments = self._build_boundary_segments(layout)

    @staticmethod
    def _build_boundary_segments(layout: Layout) -> tuple[np.ndarray, np.ndarray]:
        a_l, b_l = geo.polyline_segments(layout.boundary_left, layout.closed)
        a_r, b_r = geo.polyline_segments(layout.boundary_right, layout.closed)
        return np.vstack([a_l, a_r]), np.vstack([b_l, b_r])

    # ---- observation ----------------------------------------------------

    def raycast(self, include_boundaries: bool = True) -> np.ndarray:
        """Ray distances from the ego front bumper, N_RAYS around heading."""
        fwd = np.array([np.cos(self.ego.heading), np.sin(self.ego.heading)])
        origin = self.ego.position + 0.5 * self.ego.length * fwd
        seg_a_parts, seg_b_parts = [], []
        if include_boundaries:
            seg_a_parts.append(self._boundary_segments[0])
            seg_b_parts.append(self._boundary_segments[1])
        for tv in self.traffic:
            segs = geo.segments_of_rect(tv.state.corners())
            seg_a_parts.append(segs[:, 0])
            seg_b_parts.append(segs[:, 1])
        if seg_a_parts:
            seg_a = np.vstack(seg_a_parts)
            seg_b = np.vstack(seg_b_parts)
        else:
            seg_a = np.empty((0, 2))
            seg_b = np.empty((0, 2))
        ranges = np.empty(N_RAYS)
        for i in range(N_RAYS):
            ang = self.ego.heading + 2.0 * np.pi * i / N_RAYS
            direction = np.array([np.cos(ang), np.sin(ang)])
            ranges[i] = geo.ray_segments_distance(origin, direction, seg_a, seg_b,
                                                  MAX_RAY_RANGE)
        return ranges

    def _route_frame(self) -> tuple[np.ndarray, np.ndarray, float, float]:
        w_t, w_next = nearest_waypoints(self.route, self.ego.position)
        seg_dir = w_next - w_t
        seg_angle = np.arctan2(seg_dir[1], seg_dir[0])
        rel_heading = geo.wrap_angle(self.ego.heading - seg_angle)
        lat = geo.signed_lateral_offset(self.ego.position, w_t, w_next)
        return w_t, w_next, rel_heading, lat

    def observe(self, include_boundaries: bool = True) -> Observation:
        _, _, rel_heading, lat = self._route_frame()
        return Observation(ranges=self.raycast(include_boundaries),
                           speed=self.ego.speed,
                           rel_heading=rel_heading,
                           lateral_offset=lat)

    # ---- dynamics --------------------------------------------------------

    def _advance_traffic(self) -> None:
        from .traffic import traffic_control
        n = len(self.route.waypoints)
        for tv in self.traffic:
            accel, steer = traffic_control(tv, self.route.waypoints, self.traffic)
            tv.state = kinematic_update(tv.state, EgoAction(accel, steer))
            tv.route_index = nearest_waypoint_index(self.route.waypoints,
                                                    tv.state.position) % n

    def step(self, a: EgoAction) -> tuple["World", Observation, StepInfo, Termination]:
        if self.termination.done:
            raise SimError(f"step after termination ({self.termination.reason})")
        a = EgoAction(a.longitudinal, a.steer)

        self.ego = kinematic_update(self.ego, a)
        self._advance_traffic()
        self.step_index += 1

        # collision accounting (oriented-rectangle overlap)
        ego_corners = self.ego.corners()
        collision = any(geo.rects_overlap(ego_corners, tv.state.corners())
                        for tv in self.traffic)
        if collision:
            self.collision_count += 1

        # lane accounting
        w_t, w_next, rel_heading, lat = self._route_frame()
        out_of_lane = abs(lat) > self.route.lane_half_width
        excess = max(0.0, abs(lat) - self.route.lane_half_width)
        self.cumulative_lateral_deviation += excess * DT

        # stuck clock
        if self.ego.speed < STUCK_SPEED:
            self.stationary_clock += DT
        else:
            self.stationary_clock = 0.0

        # route progress (monotone high-water mark)
        k = nearest_waypoint_index(self.route.waypoints, self.ego.position)
        if k > self.progress_index and k - self.progress_index < 20:
            self.progress_index = k
        route_complete = (self.progress_index >= len(self.route) - 2 and
                          np.linalg.norm(self.ego.position - self.route.waypoints[-1]) < 4.0)

        # exactly one reason fires; fixed priority
        if self.collision_count > 0:
            self.termination = Termination("collision")
        elif self.cumulative_lateral_deviation > LATERAL_DEVIATION_BUDGET:
            self.termination = Termination("lateral_deviation")
        elif self.stationary_clock >= STUCK_SECONDS - 0.5 * DT:
            self.termination = Termination("stuck")
        elif route_complete:
            self.termination = Termination("route_complete")
        elif self.step_index >= MAX_STEPS:
            self.termination = Termination("max_steps")

        info = StepInfo(
            ego_position=self.ego.position.copy(),
            ego_heading=self.ego.heading,
            ego_velocity=self.ego.velocity,
            v_lon=self.ego.speed,
            steer_command=a.steer,
            steer_applied=a.steer * MAX_WHEEL_ANGLE,
            collision=collision,
            out_of_lane=out_of_lane,
            lateral_offset=lat,
            nearest_wp=w_t.copy(),
            next_wp=w_next.copy(),
            traffic=[tv.state.copy() for tv in self.traffic],
        )
        return self, self.observe(), info, self.termination


def spawn_scenario(seed: int, n_traffic: int, map_id: str) -> World:
    """Deterministic scenario: ego at rest on the route, traffic spread out."""
    layout = get_layout(map_id)
    rng = np.random.default_rng(seed)
    n = len(layout.route)

    start = int(rng.integers(0, n))
    waypoints = np.vstack([layout.route[start:], layout.route[:start], layout.route[start:start + 1]]) \
        if layout.closed else layout.route
    route = Route(waypoints=waypoints, lane_half_width=layout.lane_half_width)

    d0 = route.waypoints[1] - route.waypoints[0]
    ego = VehicleState(position=route.waypoints[0].copy(),
                       heading=float(np.arctan2(d0[1], d0[0])), speed=0.0)

    traffic: list[TrafficVehicle] = []
    occupied = [ego]
    for _ in range(n_traffic):
        placed = False
        for _attempt in range(200):
            idx = int(rng.integers(0, n - 2))
            pos = route.waypoints[idx].copy()
            d = route.waypoints[idx + 1] - route.waypoints[idx]
            heading = float(np.arctan2(d[1], d[0]))
            cand = VehicleState(pos, heading, speed=float(rng.uniform(3.0, 8.0)))
            cand_corners = cand.corners()
            min_gap = 8.0
            too_close = any(
                np.linalg.norm(cand.position - v.position) < min_gap or
                geo.rects_overlap(cand_corners, v.corners())
                for v in occupied)
            if not too_close:
                traffic.append(TrafficVehicle(state=cand, route_index=idx,
                                              target_speed=cand.speed))
                occupied.append(cand)
                placed = True
                break
        if not placed:
            raise SimError(f"could not place traffic vehicle {len(traffic)} "
                           f"after bounded retries (n_traffic={n_traffic})")
    return World(layout, route, ego, traffic, seed)
