"""Deterministic 2D top-down bin-grasping environment."""

from graspworld.sim.shapes import ObjectShape, spawn_objects
from graspworld.sim.world import (
    Action,
    GripperState,
    SimParams,
    WorldState,
    format_step_record,
    gripper_status,
    parse_step_record,
    reset,
    step,
)
from graspworld.sim.render import oracle_masks, render

__all__ = [
    "Action",
    "GripperState",
    "ObjectShape",
    "SimParams",
    "WorldState",
    "format_step_record",
    "gripper_status",
    "oracle_masks",
    "parse_step_record",
    "render",
    "reset",
    "spawn_objects",
    "step",
]
