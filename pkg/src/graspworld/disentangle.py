"""Observation preprocessing levels L0 to L3.

Each level turns a rendered frame plus oracle masks into a channel
stack normalized to [-1, 1].  White background is +1 in every channel
and the solid position rectangles are -1.  The level decides how many
3-channel sub-images the stack holds: raw (L0), attention (L1),
internal/external split (L2), and the what/where split (L3).
"""

import enum
import struct
import zlib
from dataclasses import dataclass
from typing import Tuple

import numpy as np

WHITE = 255
BBOX_MARGIN_BASE = 15  # pixels at 128x128; scales with resolution


class Level(enum.Enum):
    L0 = 0
    L1 = 1
    L2 = 2
    L3 = 3

    @property
    def channels(self) -> int:
        return {Level.L0: 3, Level.L1: 3, Level.L2: 6, Level.L3: 12}[self]


@dataclass(frozen=True)
class ObservationStack:
    channels: np.ndarray  # (C, H, W) float64 in [-1, 1]
    gripper_status: Tuple[float, float]
    level: Level


def reward_mode_for(level: Level) -> str:
    """L0 cannot distinguish the target, so any grasped object counts."""
    return "any_object" if level is Level.L0 else "target_only"


def bbox_margin(resolution: int) -> int:
    return int(round(BBOX_MARGIN_BASE * resolution / 128))


def expand_bbox(bbox, margin_px: int, image_bounds) -> tuple:
    """Grow each side by margin_px, clipped to [0, bound]."""
    x0, y0, x1, y1 = bbox
    w, h = image_bounds
    return (
        max(x0 - margin_px, 0),
        max(y0 - margin_px, 0),
        min(x1 + margin_px, w),
        min(y1 + margin_px, h),
    )


def normalize(frame: np.ndarray) -> np.ndarray:
    """uint8 image (H, W, 3) to float (3, H, W) in [-1, 1]."""
    return np.ascontiguousarray(frame.astype(np.float64).transpose(2, 0, 1)) / 127.5 - 1.0


def denormalize(channels: np.ndarray) -> np.ndarray:
    """Inverse of normalize, back to uint8 (H, W, C_total/3 * 3) per image."""
    u = np.rint((channels + 1.0) * 127.5)
    return np.clip(u, 0, 255).astype(np.uint8)


def _nn_resize(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    h, w = image.shape[:2]
    rows = np.minimum((np.floor((np.arange(out_h) + 0.5) * h / out_h)).astype(int), h - 1)
    cols = np.minimum((np.floor((np.arange(out_w) + 0.5) * w / out_w)).astype(int), w - 1)
    return image[rows][:, cols]


def _tight_rect(mask: np.ndarray):
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    if len(rows) == 0:
        return None
    return int(cols[0]), int(rows[0]), int(cols[-1]) + 1, int(rows[-1]) + 1


def _white_like(frame: np.ndarray) -> np.ndarray:
    return np.full_like(frame, WHITE)


def _robot_image(frame, robot_mask):
    out = _white_like(frame)
    out[robot_mask] = frame[robot_mask]
    return out


def _focus_image(frame, region):
    x0, y0, x1, y1 = region
    out = _white_like(frame)
    out[y0:y1, x0:x1] = frame[y0:y1, x0:x1]
    return out


def _rect_image(frame, rect):
    out = _white_like(frame)
    if rect is not None:
        x0, y0, x1, y1 = rect
        out[y0:y1, x0:x1] = 0
    return out


def _centered_robot_image(frame, robot_mask):
    """Robot pixels shifted so their tight rectangle is centered."""
    h, w = robot_mask.shape
    out = _white_like(frame)
    rect = _tight_rect(robot_mask)
    if rect is None:
        return out
    x0, y0, x1, y1 = rect
    dy = (h - y0 - y1) // 2
    dx = (w - x0 - x1) // 2
    rows, cols = np.nonzero(robot_mask)
    nr, nc = rows + dy, cols + dx
    keep = (nr >= 0) & (nr < h) & (nc >= 0) & (nc < w)
    out[nr[keep], nc[keep]] = frame[rows[keep], cols[keep]]
    return out


def preprocess(level: Level, frame: np.ndarray, masks, gripper_status) -> ObservationStack:
    """Build the ObservationStack for one rendered frame.

    `masks` is the (robot_mask, target_bbox) pair the simulator's oracle
    produces for the same world the frame came from.
    """
    robot_mask, target_bbox = masks
    if frame.ndim != 3 or frame.shape[2] != 3:
        raise ValueError(f"frame must be (H, W, 3), got {frame.shape}")
    h, w = frame.shape[:2]
    if robot_mask.shape != (h, w):
        raise ValueError(
            f"mask shape {robot_mask.shape} does not match frame {frame.shape[:2]}"
        )
    region = expand_bbox(target_bbox, bbox_margin(h), (w, h))

    if level is Level.L0:
        parts = [frame]
    elif level is Level.L1:
        x0, y0, x1, y1 = region
        keep = robot_mask.copy()
        keep[y0:y1, x0:x1] = True
        attended = _white_like(frame)
        attended[keep] = frame[keep]
        parts = [attended]
    elif level is Level.L2:
        parts = [_robot_image(frame, robot_mask), _focus_image(frame, region)]
    else:
        x0, y0, x1, y1 = region
        crop = frame[y0:y1, x0:x1]
        external_app = _nn_resize(crop, h, w) if crop.size else _white_like(frame)
        parts = [
            _rect_image(frame, _tight_rect(robot_mask)),
            _centered_robot_image(frame, robot_mask),
            _rect_image(frame, region if (x1 > x0 and y1 > y0) else None),
            external_app,
        ]

    channels = np.concatenate([normalize(p) for p in parts], axis=0)
    return ObservationStack(
        channels=channels, gripper_status=tuple(float(v) for v in gripper_status), level=level
    )


# --- compact storage -------------------------------------------------------
#
# Replay keeps observations as zlib-compressed uint8, which reconstructs
# the float stack exactly because every channel value is u / 127.5 - 1
# for some integer u.

_PACK_HEADER = struct.Struct("<BHHdd")


def pack_observation(stack: ObservationStack) -> bytes:
    c, h, w = stack.channels.shape
    raw = denormalize(stack.channels).tobytes()
    header = _PACK_HEADER.pack(stack.level.value, h, w, *stack.gripper_status)
    return header + zlib.compress(raw, level=1)


def unpack_observation(blob: bytes) -> ObservationStack:
    level_value, h, w, open_flag, z = _PACK_HEADER.unpack(blob[: _PACK_HEADER.size])
    level = Level(level_value)
    raw = zlib.decompress(blob[_PACK_HEADER.size :])
    u = np.frombuffer(raw, dtype=np.uint8).reshape(level.channels, h, w)
    return ObservationStack(
        channels=u.astype(np.float64) / 127.5 - 1.0,
        gripper_status=(open_flag, z),
        level=level,
    )
