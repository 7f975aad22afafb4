"""Rasterization and oracle segmentation for the grasping world.

Pure numpy, no antialiasing: a pixel belongs to a shape iff its center
does.  The row axis is workspace y, so the arm base at (0.5, 1.0) sits
at the bottom edge of the image.
"""

from typing import Tuple

import numpy as np

from graspworld.sim import geometry
from graspworld.sim.shapes import ARM_COLOR, BACKGROUND_COLOR
from graspworld.sim.world import WorldState, _jaw_segment

BIN_BORDER_COLOR = (120, 120, 120)
ARM_BASE = (0.5, 1.0)
TRUNK_HALF_WIDTH = 0.018
FINGER_HALF_WIDTH = 0.012
FINGER_HALF_LENGTH = 0.03
CLOSED_HALF_GAP = 0.02


def _pixel_grid(h: int, w: int):
    xs = (np.arange(w) + 0.5) / w
    ys = (np.arange(h) + 0.5) / h
    return np.meshgrid(xs, ys)


def _convex_mask(gx, gy, vertices) -> np.ndarray:
    v = np.asarray(vertices)
    if geometry.polygon_area(v) < 0:
        v = v[::-1]
    nxt = np.roll(v, -1, axis=0)
    inside = np.ones(gx.shape, dtype=bool)
    for (x0, y0), (x1, y1) in zip(v, nxt):
        inside &= (x1 - x0) * (gy - y0) - (y1 - y0) * (gx - x0) >= 0
    return inside


def _capsule_mask(gx, gy, p0, p1, radius) -> np.ndarray:
    px, py = p0
    qx, qy = p1
    dx, dy = qx - px, qy - py
    denom = dx * dx + dy * dy
    if denom < 1e-18:
        t = np.zeros_like(gx)
    else:
        t = np.clip(((gx - px) * dx + (gy - py) * dy) / denom, 0.0, 1.0)
    cx, cy = px + t * dx, py + t * dy
    return (gx - cx) ** 2 + (gy - cy) ** 2 <= radius * radius


def _arm_mask(world: WorldState, h: int, w: int) -> np.ndarray:
    gx, gy = _pixel_grid(h, w)
    g = world.gripper
    mask = _capsule_mask(gx, gy, ARM_BASE, (g.x, g.y), TRUNK_HALF_WIDTH)

    ux, uy = np.cos(g.azimuth), np.sin(g.azimuth)
    half_gap = 0.5 * world.params.jaw_width if g.open else CLOSED_HALF_GAP
    (ax, ay), (bx, by) = _jaw_segment(g.x, g.y, g.azimuth, 2.0 * half_gap)
    for fx, fy in ((ax, ay), (bx, by)):
        p0 = (fx - FINGER_HALF_LENGTH * ux, fy - FINGER_HALF_LENGTH * uy)
        p1 = (fx + FINGER_HALF_LENGTH * ux, fy + FINGER_HALF_LENGTH * uy)
        mask |= _capsule_mask(gx, gy, p0, p1, FINGER_HALF_WIDTH)
    return mask


def render(world: WorldState, resolution: int = 64) -> np.ndarray:
    """Top-down RGB frame, uint8 with shape (resolution, resolution, 3)."""
    h = w = resolution
    img = np.empty((h, w, 3), dtype=np.uint8)
    img[:] = BACKGROUND_COLOR

    m = world.params.bin_margin
    lo_c, hi_c = int(round(m * w)), int(round((1.0 - m) * w))
    lo_r, hi_r = int(round(m * h)), int(round((1.0 - m) * h))
    img[lo_r, lo_c:hi_c] = BIN_BORDER_COLOR
    img[hi_r - 1, lo_c:hi_c] = BIN_BORDER_COLOR
    img[lo_r:hi_r, lo_c] = BIN_BORDER_COLOR
    img[lo_r:hi_r, hi_c - 1] = BIN_BORDER_COLOR

    gx, gy = _pixel_grid(h, w)
    for obj in world.objects:
        img[_convex_mask(gx, gy, obj.world_vertices())] = obj.color

    img[_arm_mask(world, h, w)] = ARM_COLOR
    return img


def oracle_masks(world: WorldState, resolution: int = 64):
    """Ground-truth robot mask and target bounding box.

    The mask marks exactly the pixels render() paints in the arm color.
    The box comes from the target's projected vertices, so occlusion by
    the arm does not shrink it; coordinates are (x0, y0, x1, y1) pixel
    indices with exclusive upper edges.
    """
    h = w = resolution
    robot_mask = _arm_mask(world, h, w)
    target = world.target()
    if target is None:
        return robot_mask, (0, 0, 0, 0)
    verts = target.world_vertices()
    x0 = int(np.clip(np.floor(verts[:, 0].min() * w), 0, w))
    x1 = int(np.clip(np.ceil(verts[:, 0].max() * w), 0, w))
    y0 = int(np.clip(np.floor(verts[:, 1].min() * h), 0, h))
    y1 = int(np.clip(np.ceil(verts[:, 1].max() * h), 0, h))
    return robot_mask, (x0, y0, x1, y1)
