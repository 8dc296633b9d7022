"""Safety-constraint engine: route direction vectors, angle decompositions,
front and lateral time-to-collision, steering smoothness, and the f1/f2
shaped rewards.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .simworld.world import MAX_WHEEL_ANGLE, StepInfo, VehicleState

FRONTAL_CONE_HALF_ANGLE = np.deg2rad(30.0)
FRONTAL_CONE_RANGE = 25.0          # meters
DENOM_EPS = 1e-9


class SafetyError(Exception):
    pass


@dataclass
class RouteDirection:
    wp: np.ndarray                 # world-frame direction, non-zero

    def __post_init__(self):
        self.wp = np.asarray(self.wp, dtype=np.float64)
        if np.linalg.norm(self.wp) < 1e-12:
            raise SafetyError("route direction must be non-zero")


@dataclass
class AngleDecomposition:
    cos_delta: float               # in [-1, 1]
    delta: float                   # radians in [0, pi]
    sign: float                    # +1/-1, from the cross product of wp and velocity

    @property
    def sin_delta(self) -> float:
        return float(np.sqrt(max(0.0, 1.0 - self.cos_delta ** 2)))

    @property
    def signed_sin(self) -> float:
        return self.sign * self.sin_delta


@dataclass
class TtcThresholds:
    c_tau: float = 6.0             # seconds, valid range (5, 7)
    front_safe: float = 4.0        # seconds
    e_c: tuple[float, float] = (0.0, 0.2)   # closed interval, steer units

    def __post_init__(self):
        if not (5.0 < self.c_tau < 7.0):
            raise SafetyError(f"c_tau must lie in (5, 7), got {self.c_tau}")
        if self.e_c[0] < 0.0 or self.e_c[1] < self.e_c[0]:
            raise SafetyError(f"invalid e_c interval {self.e_c}")


@dataclass
class RewardTerms:
    r_c: float = 0.0
    r_f: float = 0.0
    r_o: float = 0.0
    r_ft: float = 0.0
    r_lt: float = 0.0
    r_sc: float = 0.0
    v_lon: float = 0.0
    alpha: float = 0.0             # ego steering angle, radians

    def __post_init__(self):
        for name in ("r_c", "r_f", "r_o", "r_ft", "r_lt", "r_sc"):
            v = getattr(self, name)
            if v not in (0.0, -1.0, 0, -1):
                raise SafetyError(f"{name} must be 0 or -1, got {v}")

    @property
    def r_lat(self) -> float:
        return -abs(self.alpha) * self.v_lon ** 2


def waypoint_direction(w_t, w_next, mode: str = "standard") -> RouteDirection:
    """Route progression direction from the two nearest waypoints.

    "standard" is the difference vector; "midpoint_offset" keeps the legacy
    midpoint-minus-endpoint combination for fidelity testing.
    """
    w_t = np.asarray(w_t, dtype=np.float64)
    w_next = np.asarray(w_next, dtype=np.float64)
    if np.linalg.norm(w_next - w_t) < 1e-12:
        raise SafetyError("waypoints must be distinct")
    if mode == "standard":
        return RouteDirection(w_next - w_t)
    if mode == "midpoint_offset":
        return RouteDirection((w_next - w_t) / 2.0 - w_t)
    raise SafetyError(f"unknown mode {mode!r}")


def angle_to_route(velocity, wp: RouteDirection) -> AngleDecomposition:
    """Angle between a velocity vector and the route direction.

    Zero velocity decomposes to delta = 0 by convention, so a stationary
    vehicle contributes no closing speed.
    """
    v = np.asarray(velocity, dtype=np.float64)
    w = wp.wp
    nw = np.linalg.norm(w)
    if nw < 1e-12:
        raise SafetyError("zero route direction")
    nv = np.linalg.norm(v)
    if nv < 1e-12:
        return AngleDecomposition(cos_delta=1.0, delta=0.0, sign=1.0)
    cos_delta = float(np.clip((v @ w) / (nv * nw), -1.0, 1.0))
    delta = float(np.arccos(cos_delta))
    cross = w[0] * v[1] - w[1] * v[0]
    sign = 1.0 if cross >= 0.0 else -1.0
    return AngleDecomposition(cos_delta=cos_delta, delta=delta, sign=sign)


def front_ttc(ego: VehicleState, other: VehicleState, wp: RouteDirection) -> float:
    """Front time-to-collision from route-relative closing components.

    gap / |v_ego*sin(delta_e) - v_other*sin(delta_a)| with signed sines;
    a vanishing denominator gives +inf.
    """
    gap = float(np.linalg.norm(ego.position - other.position))
    dec_e = angle_to_route(ego.velocity, wp)
    dec_a = angle_to_route(other.velocity, wp)
    closing = ego.speed * dec_e.signed_sin - other.speed * dec_a.signed_sin
    if abs(closing) < DENOM_EPS:
        return float("inf")
    return gap / abs(closing)


def brute_force_ttc(ego: VehicleState, other: VehicleState,
                    horizon: float = 20.0, substep: float = 1e-3) -> float:
    """Constant-velocity footprint simulation; first overlap time or +inf.

    Test oracle for the analytic TTC formulas.
    """
    from .simworld import geometry as geo
    if horizon <= 0:
        raise SafetyError("horizon must be positive")
    ve = ego.velocity
    vo = other.velocity
    n = int(round(horizon / substep))
    # coarse-to-fine: scan at 10x substep, refine around the first hit
    coarse = 10 * substep
    t = 0.0
    def overlap_at(t: float) -> bool:
        ce = geo.rect_corners(ego.position + ve * t, ego.heading, ego.length, ego.width)
        co = geo.rect_corners(other.position + vo * t, other.heading, other.length, other.width)
        return geo.rects_overlap(ce, co)
    n_coarse = int(round(horizon / coarse))
    hit_coarse = None
    for i in range(n_coarse + 1):
        if overlap_at(i * coarse):
            hit_coarse = i * coarse
            break
    if hit_coarse is None:
        return float("inf")
    start = max(0.0, hit_coarse - coarse)
    k = 0
    while start + k * substep <= hit_coarse + substep:
        if overlap_at(start + k * substep):
            return start + k * substep
        k += 1
    return hit_coarse


def lateral_ttc_clamp(z_tau: float, nu_g: float, mu_a: float, c_tau: float) -> float:
    """Interval-based clamping of the lateral TTC.

    Branch conditions are nested; the most restrictive matching branch wins.
    No match leaves z_tau unchanged.
    """
    for v, name in ((z_tau, "z_tau"), (nu_g, "nu_g"), (mu_a, "mu_a")):
        if not (v >= 0.0 or np.isinf(v)):
            raise SafetyError(f"{name} must be >= 0 or +inf, got {v}")
    if not (5.0 < c_tau < 7.0):
        raise SafetyError(f"c_tau must lie in (5, 7), got {c_tau}")
    result = z_tau
    if nu_g <= c_tau - 1.5 and mu_a <= c_tau - 0.5:
        result = min(z_tau, c_tau + 1.0)
    if nu_g <= c_tau - 3.0 and mu_a <= c_tau - 2.0:
        result = min(z_tau, c_tau - 1.8)
    if nu_g <= c_tau - 3.5 and mu_a <= c_tau - 3.0:
        result = min(z_tau, c_tau - 3.0)
    return result


def smooth_steer_ok(actual: float, predicted: float,
                    e_c: tuple[float, float] = (0.0, 0.2)) -> bool:
    """True iff |actual - predicted| lies inside the closed interval e_c."""
    if e_c[0] < 0.0 or e_c[1] < e_c[0]:
        raise SafetyError(f"invalid e_c interval {e_c}")
    diff = abs(actual - predicted)
    return e_c[0] <= diff <= e_c[1]


def reward_f1(t: RewardTerms) -> float:
    return (200.0 * t.r_c + t.v_lon + 10.0 * t.r_f + t.r_o
            - 5.0 * t.alpha ** 2 + 0.2 * t.r_lat - 0.1)


def reward_f2(t: RewardTerms) -> float:
    return reward_f1(t) + 200.0 * t.r_ft + 50.0 * t.r_lt + 2.0 * t.r_sc


def _relative_ttcs(ego: VehicleState, other: VehicleState,
                   wp: RouteDirection) -> tuple[float, float, float]:
    """(z_tau, nu_g, mu_a): gap over combined / along-route / across-route speed."""
    rel_pos = other.position - ego.position
    rel_vel = other.velocity - ego.velocity
    gap = float(np.linalg.norm(rel_pos))
    w = wp.wp / np.linalg.norm(wp.wp)
    perp = np.array([-w[1], w[0]])

    def ratio(num: float, den: float) -> float:
        return num / abs(den) if abs(den) > DENOM_EPS else float("inf")

    z_tau = ratio(gap, float(np.linalg.norm(rel_vel)))
    nu_g = ratio(abs(float(rel_pos @ w)), float(rel_vel @ w))
    mu_a = ratio(abs(float(rel_pos @ perp)), float(rel_vel @ perp))
    return z_tau, nu_g, mu_a


def in_frontal_cone(ego: VehicleState, other: VehicleState,
                    half_angle: float = FRONTAL_CONE_HALF_ANGLE,
                    cone_range: float = FRONTAL_CONE_RANGE) -> bool:
    rel = other.position - ego.position
    dist = float(np.linalg.norm(rel))
    if dist > cone_range or dist < 1e-9:
        return False
    bearing = np.arctan2(rel[1], rel[0]) - ego.heading
    bearing = (bearing + np.pi) % (2 * np.pi) - np.pi
    return abs(bearing) <= half_angle


def compute_step_reward(info: StepInfo, thresholds: TtcThresholds,
                        predicted_steer: float | None,
                        shaping: str = "f1") -> tuple[float, RewardTerms]:
    """Derive all indicator terms from one step's raw quantities.

    predicted_steer is the policy's predicted wheel angle (radians); it is
    required for the f2 smoothness constraint.
    """
    if shaping not in ("f1", "f2"):
        raise SafetyError(f"unknown shaping {shaping!r}")
    if shaping == "f2" and predicted_steer is None:
        raise SafetyError("f2 shaping requires a predicted steer")

    ego = VehicleState(info.ego_position, info.ego_heading, info.v_lon)
    wp = waypoint_direction(info.nearest_wp, info.next_wp)

    r_c = -1.0 if info.collision else 0.0
    r_f = -1.0 if info.v_lon > 8.0 else 0.0
    r_o = -1.0 if info.out_of_lane else 0.0

    r_ft = 0.0
    r_lt = 0.0
    if shaping == "f2":
        for other in info.traffic:
            if in_frontal_cone(ego, other):
                if front_ttc(ego, other, wp) < thresholds.front_safe:
                    r_ft = -1.0
            else:
                z_tau, nu_g, mu_a = _relative_ttcs(ego, other, wp)
                clamped = lateral_ttc_clamp(z_tau, nu_g, mu_a, thresholds.c_tau)
                if clamped < thresholds.c_tau:
                    r_lt = -1.0
        r_sc = 0.0 if smooth_steer_ok(info.steer_applied, predicted_steer,
                                      thresholds.e_c) else -1.0
    else:
        r_sc = 0.0

    terms = RewardTerms(r_c=r_c, r_f=r_f, r_o=r_o, r_ft=r_ft, r_lt=r_lt,
                        r_sc=r_sc, v_lon=info.v_lon, alpha=info.steer_applied)
    reward = reward_f1(terms) if shaping == "f1" else reward_f2(terms)
    return reward, terms
