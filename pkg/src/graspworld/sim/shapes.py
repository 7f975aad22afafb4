"""Procedural convex object pool and episode spawning.

Shapes are regenerated on demand from (pool name, index); nothing is
stored on disk.  The train pool occupies indices [0, 200) and the test
pool [200, 300), so the two sets are disjoint by construction.
"""

import zlib
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from graspworld.sim import geometry

POOL_RANGES = {"train": (0, 200), "test": (200, 300)}
_SHAPE_SALT = 0x5E0_FACE

# colors reserved for the renderer; object colors keep their distance
ARM_COLOR = (30, 30, 30)
BACKGROUND_COLOR = (235, 235, 235)


@dataclass(frozen=True)
class ObjectShape:
    id: int
    vertices: np.ndarray  # (n, 2) convex CCW polygon, object frame
    color: tuple
    x: float
    y: float
    rotation: float
    is_target: bool

    def world_vertices(self) -> np.ndarray:
        return geometry.transform(self.vertices, self.x, self.y, self.rotation)

    def centroid(self) -> np.ndarray:
        return geometry.polygon_centroid(self.world_vertices())

    def moved_to(self, x: float, y: float) -> "ObjectShape":
        return replace(self, x=x, y=y)


def _pool_vertices(rng: np.random.Generator) -> np.ndarray:
    """Convex polygon with 4 to 8 vertices fitting in a small disc."""
    while True:
        radius = rng.uniform(0.035, 0.07)
        pts = rng.uniform(-radius, radius, size=(10, 2))
        hull = geometry.convex_hull(pts)
        if not 4 <= len(hull) <= 8:
            continue
        if geometry.polygon_area(hull) < 0.3 * radius * radius:
            continue
        return hull - geometry.polygon_centroid(hull)


def _pool_color(rng: np.random.Generator) -> tuple:
    while True:
        c = rng.integers(20, 221, size=3)
        if np.abs(c - np.array(ARM_COLOR)).max() < 60:
            continue
        if np.abs(c - np.array(BACKGROUND_COLOR)).max() < 60:
            continue
        return tuple(int(v) for v in c)


def pool_shape(object_set: str, index: int):
    """Vertices and color for one pool entry, deterministic in (set, index)."""
    lo, hi = POOL_RANGES[object_set]
    if not 0 <= index < hi - lo:
        raise ValueError(f"index {index} outside pool '{object_set}'")
    seq = np.random.SeedSequence([_SHAPE_SALT, lo + index])
    rng = np.random.default_rng(seq)
    return _pool_vertices(rng), _pool_color(rng)


def spawn_objects(
    seed: int,
    count: int,
    object_set: str = "train",
    bin_margin: float = 0.08,
    rng: Optional[np.random.Generator] = None,
):
    """Place `count` pool shapes in the bin without overlap.

    Deterministic in (seed, count, object_set).  Each object gets up to
    1000 placement attempts; exhausting them raises with the seed named.
    Exactly one object, chosen uniformly, is the target.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    lo, hi = POOL_RANGES[object_set]
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence([seed, zlib.crc32(object_set.encode())]))
    indices = rng.choice(hi - lo, size=min(count, hi - lo), replace=False)
    if count > hi - lo:
        extra = rng.integers(0, hi - lo, size=count - (hi - lo))
        indices = np.concatenate([indices, extra])
    target_slot = int(rng.integers(count))

    placed = []
    hulls = []
    for slot, pool_index in enumerate(indices):
        vertices, color = pool_shape(object_set, int(pool_index))
        for attempt in range(1000):
            x = rng.uniform(bin_margin, 1.0 - bin_margin)
            y = rng.uniform(bin_margin, 1.0 - bin_margin)
            rot = rng.uniform(0.0, 2.0 * np.pi)
            world = geometry.transform(vertices, x, y, rot)
            if world.min() < bin_margin or world.max() > 1.0 - bin_margin:
                continue
            if any(geometry.polygons_overlap(world, h) for h in hulls):
                continue
            placed.append(
                ObjectShape(
                    id=slot,
                    vertices=vertices,
                    color=color,
                    x=x,
                    y=y,
                    rotation=rot,
                    is_target=(slot == target_slot),
                )
            )
            hulls.append(world)
            break
        else:
            raise RuntimeError(
                f"could not place object {slot} after 1000 attempts (seed {seed})"
            )
    return placed
