"""The grasping MDP: kinematic gripper over a 2D bin of convex objects.

`step` is a pure function: it never mutates its input, so replaying a
logged action sequence from the same reset reproduces every reward and
render byte for byte.
"""

import json
import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from graspworld.sim import geometry
from graspworld.sim.shapes import ObjectShape, spawn_objects

STEP_PENALTY = -0.05
REWARD_MODES = ("target_only", "any_object")


@dataclass(frozen=True)
class SimParams:
    horizon: int = 15
    max_step_xy: float = 0.15
    max_step_z: float = 0.34
    max_step_azimuth: float = math.pi / 4
    z_grasp: float = 0.1
    z_lift: float = 0.5
    jaw_width: float = 0.12
    bin_margin: float = 0.08


@dataclass(frozen=True)
class GripperState:
    x: float
    y: float
    z: float
    azimuth: float
    open: bool
    attached: Optional[int] = None  # object id, only while closed


@dataclass(frozen=True)
class Action:
    """(t, r, g, e): target pose, azimuth, gripper and termination commands.

    The gripper opens iff g > 0.5 and the episode terminates iff e > 0.5.
    """

    t: Tuple[float, float, float]
    r: float
    g: float
    e: float

    @classmethod
    def from_vector(cls, v: Sequence[float]) -> "Action":
        v = [float(c) for c in v]
        if len(v) != 6:
            raise ValueError(f"action vector needs 6 components, got {len(v)}")
        return cls(t=(v[0], v[1], v[2]), r=v[3], g=v[4], e=v[5])

    def to_vector(self) -> np.ndarray:
        return np.array([*self.t, self.r, self.g, self.e], dtype=np.float64)

    def validate(self) -> None:
        if not np.isfinite(self.to_vector()).all():
            raise ValueError("action has non-finite components")


@dataclass(frozen=True)
class WorldState:
    objects: Tuple[ObjectShape, ...]
    gripper: GripperState
    step_count: int
    seed: int
    done: bool
    reward_mode: str = "target_only"
    params: SimParams = field(default_factory=SimParams)

    def target(self) -> Optional[ObjectShape]:
        for obj in self.objects:
            if obj.is_target:
                return obj
        return None


def reset(
    seed: int,
    count: int = 20,
    object_set: str = "train",
    reward_mode: str = "target_only",
    params: Optional[SimParams] = None,
) -> WorldState:
    """Fresh episode: objects spawned from the pool, gripper open at the top."""
    if reward_mode not in REWARD_MODES:
        raise ValueError(f"unknown reward_mode {reward_mode!r}")
    params = params or SimParams()
    objects = spawn_objects(seed, count, object_set, bin_margin=params.bin_margin)
    gripper = GripperState(x=0.5, y=0.5, z=1.0, azimuth=0.0, open=True)
    return WorldState(
        objects=tuple(objects),
        gripper=gripper,
        step_count=0,
        seed=seed,
        done=False,
        reward_mode=reward_mode,
        params=params,
    )


def _wrap_angle(a: float) -> float:
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def _jaw_segment(x: float, y: float, azimuth: float, jaw_width: float):
    # finger-gap line, perpendicular to the azimuth direction
    vx, vy = -math.sin(azimuth), math.cos(azimuth)
    half = 0.5 * jaw_width
    return (x - half * vx, y - half * vy), (x + half * vx, y + half * vy)


def _move(gripper: GripperState, action: Action, params: SimParams):
    """Clamped kinematic update; returns (new pose, collided)."""
    dx = action.t[0] - gripper.x
    dy = action.t[1] - gripper.y
    norm = math.hypot(dx, dy)
    if norm > params.max_step_xy:
        scale = params.max_step_xy / norm
        dx, dy = dx * scale, dy * scale
    nx, ny = gripper.x + dx, gripper.y + dy
    collided = not (0.0 <= nx <= 1.0 and 0.0 <= ny <= 1.0)

    dz = min(max(action.t[2] - gripper.z, -params.max_step_z), params.max_step_z)
    nz = min(max(gripper.z + dz, 0.0), 1.0)

    da = _wrap_angle(action.r - gripper.azimuth)
    da = min(max(da, -params.max_step_azimuth), params.max_step_azimuth)
    naz = _wrap_angle(gripper.azimuth + da)

    nx = min(max(nx, 0.0), 1.0)
    ny = min(max(ny, 0.0), 1.0)
    return nx, ny, nz, naz, collided


def step(world: WorldState, action: Action) -> Tuple[WorldState, float, bool]:
    """Advance one timestep.  Returns (next world, reward, done)."""
    if world.done:
        raise ValueError("cannot step a finished episode")
    action.validate()
    params = world.params

    nx, ny, nz, naz, collided = _move(world.gripper, action, params)
    objects: List[ObjectShape] = list(world.objects)

    # attached object rides along with the gripper
    attached = world.gripper.attached
    if attached is not None:
        shift_x, shift_y = nx - world.gripper.x, ny - world.gripper.y
        for i, obj in enumerate(objects):
            if obj.id == attached:
                objects[i] = obj.moved_to(obj.x + shift_x, obj.y + shift_y)

    want_open = action.g > 0.5
    if want_open:
        attached = None
    elif attached is None and nz <= params.z_grasp:
        attached = _try_attach(objects, nx, ny, naz, params)

    step_count = world.step_count + 1
    done = collided or action.e > 0.5 or step_count >= params.horizon

    reward = STEP_PENALTY
    if done and not collided and attached is not None and nz >= params.z_lift:
        held = next(obj for obj in objects if obj.id == attached)
        if held.is_target or world.reward_mode == "any_object":
            reward += 1.0
            objects = [obj for obj in objects if obj.id != attached]
            attached = None

    gripper = GripperState(x=nx, y=ny, z=nz, azimuth=naz, open=want_open, attached=attached)
    new_world = replace(
        world,
        objects=tuple(objects),
        gripper=gripper,
        step_count=step_count,
        done=done,
    )
    return new_world, reward, done


def _try_attach(objects, x, y, azimuth, params: SimParams) -> Optional[int]:
    p0, p1 = _jaw_segment(x, y, azimuth, params.jaw_width)
    best = None
    best_dist = math.inf
    for obj in objects:
        if geometry.segment_hits_polygon(p0, p1, obj.world_vertices()):
            d = float(np.hypot(*(obj.centroid() - np.array([x, y]))))
            if d < best_dist:
                best, best_dist = obj.id, d
    return best


def gripper_status(world: WorldState) -> Tuple[int, float]:
    """(open flag, height): the two scalars appended to the RL state."""
    return (1 if world.gripper.open else 0, world.gripper.z)


def format_step_record(
    step_index: int, action: Action, reward: float, done: bool, success: bool
) -> str:
    return json.dumps(
        {
            "step": step_index,
            "action": [round(c, 12) for c in action.to_vector().tolist()],
            "reward": reward,
            "done": done,
            "success": success,
        },
        sort_keys=True,
    )


def parse_step_record(line: str):
    rec = json.loads(line)
    return (
        rec["step"],
        Action.from_vector(rec["action"]),
        rec["reward"],
        rec["done"],
        rec["success"],
    )
