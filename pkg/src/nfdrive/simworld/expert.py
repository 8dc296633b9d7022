"""Privileged scripted expert: pure-pursuit lane following with headway keeping.

Used to seed demonstration datasets and as an evaluation sanity bound.
"""

from __future__ import annotations

import numpy as np

from .traffic import pure_pursuit_steer
from .world import ACCEL_MAX, EgoAction, World


class ScriptedExpert:
    def __init__(self, target_speed: float = 5.0, lookahead: float = 7.0):
        self.target_speed = target_speed
        self.lookahead = lookahead

    def act(self, world: World) -> EgoAction:
        ego = world.ego
        steer = pure_pursuit_steer(ego.position, ego.heading,
                                   world.route.waypoints, self.lookahead)

        # brake for the nearest in-lane vehicle ahead
        fwd = np.array([np.cos(ego.heading), np.sin(ego.heading)])
        gap = np.inf
        for tv in world.traffic:
            rel = tv.state.position - ego.position
            ahead = float(rel @ fwd)
            if 0.0 < ahead < gap and abs(fwd[0] * rel[1] - fwd[1] * rel[0]) < 3.0:
                gap = ahead
        target = self.target_speed
        if gap < 8.0:
            target = 0.0
        elif gap < 18.0:
            target = min(target, 0.35 * (gap - 6.0))
        accel = float(np.clip(2.0 * (target - ego.speed), -8.0, ACCEL_MAX))
        return EgoAction(accel, steer)
