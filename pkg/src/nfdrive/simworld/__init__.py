"""Deterministic 2D driving simulator."""

from .maps import (FORMAT_VERSION, Layout, LayoutError, builtin_layouts, dumps_layout,
                   get_layout, load_layout, loads_layout, save_layout)
from .world import (ACTION_DIM, DT, MAX_RAY_RANGE, MAX_STEPS, N_RAYS, OBS_DIM,
                    EgoAction, Observation, Route, SimError, StepInfo, Termination,
                    TrafficVehicle, VehicleState, World, kinematic_update,
                    nearest_waypoint_index, nearest_waypoints, spawn_scenario)
from .expert import ScriptedExpert

__all__ = [
    "World", "VehicleState", "EgoAction", "Route", "Observation", "StepInfo",
    "Termination", "TrafficVehicle", "SimError", "spawn_scenario",
    "kinematic_update", "nearest_waypoints", "nearest_waypoint_index",
    "Layout", "LayoutError", "get_layout", "builtin_layouts", "load_layout",
    "save_layout", "loads_layout", "dumps_layout", "FORMAT_VERSION",
    "ScriptedExpert", "DT", "N_RAYS", "OBS_DIM", "ACTION_DIM", "MAX_RAY_RANGE",
    "MAX_STEPS",
]
