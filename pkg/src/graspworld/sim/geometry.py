"""Convex polygon primitives for the grasping world.

All polygons are numpy arrays of shape (n, 2) with counter-clockwise
winding.  Boundary contact counts as touching throughout.
"""

import numpy as np

EPS = 1e-12


def convex_hull(points: np.ndarray) -> np.ndarray:
    """Monotone-chain hull, counter-clockwise, no collinear vertices."""
    pts = np.unique(np.asarray(points, dtype=np.float64), axis=0)
    if len(pts) < 3:
        return pts
    # lexicographic sort, then build lower and upper chains
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]

    def build(seq):
        chain = []
        for p in seq:
            while len(chain) >= 2 and _cross(chain[-2], chain[-1], p) <= EPS:
                chain.pop()
            chain.append(p)
        return chain

    lower = build(pts)
    upper = build(pts[::-1])
    return np.array(lower[:-1] + upper[:-1])


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def polygon_area(vertices: np.ndarray) -> float:
    """Signed shoelace area; positive for counter-clockwise winding."""
    v = np.asarray(vertices)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def polygon_centroid(vertices: np.ndarray) -> np.ndarray:
    v = np.asarray(vertices, dtype=np.float64)
    x, y = v[:, 0], v[:, 1]
    cross = x * np.roll(y, -1) - np.roll(x, -1) * y
    a = 0.5 * np.sum(cross)
    cx = np.sum((x + np.roll(x, -1)) * cross) / (6.0 * a)
    cy = np.sum((y + np.roll(y, -1)) * cross) / (6.0 * a)
    return np.array([cx, cy])


def transform(vertices: np.ndarray, x: float, y: float, rotation: float) -> np.ndarray:
    """Rotate object-frame vertices by `rotation`, then translate to (x, y)."""
    c, s = np.cos(rotation), np.sin(rotation)
    rot = np.array([[c, -s], [s, c]])
    return np.asarray(vertices) @ rot.T + np.array([x, y])


def point_in_polygon(point, vertices) -> bool:
    """Convex, counter-clockwise polygon; boundary is inside."""
    v = np.asarray(vertices)
    nxt = np.roll(v, -1, axis=0)
    cross = (nxt[:, 0] - v[:, 0]) * (point[1] - v[:, 1]) - (nxt[:, 1] - v[:, 1]) * (
        point[0] - v[:, 0]
    )
    return bool((cross >= -EPS).all())


def _orient(a, b, c) -> int:
    d = _cross(a, b, c)
    if d > EPS:
        return 1
    if d < -EPS:
        return -1
    return 0


def _on_segment(a, b, p) -> bool:
    return (
        min(a[0], b[0]) - EPS <= p[0] <= max(a[0], b[0]) + EPS
        and min(a[1], b[1]) - EPS <= p[1] <= max(a[1], b[1]) + EPS
    )


def segments_intersect(a0, a1, b0, b1) -> bool:
    o1 = _orient(a0, a1, b0)
    o2 = _orient(a0, a1, b1)
    o3 = _orient(b0, b1, a0)
    o4 = _orient(b0, b1, a1)
    if o1 != o2 and o3 != o4:
        return True
    if o1 == 0 and _on_segment(a0, a1, b0):
        return True
    if o2 == 0 and _on_segment(a0, a1, b1):
        return True
    if o3 == 0 and _on_segment(b0, b1, a0):
        return True
    if o4 == 0 and _on_segment(b0, b1, a1):
        return True
    return False


def segment_hits_polygon(p0, p1, vertices) -> bool:
    """Segment touches the polygon's interior or boundary."""
    if point_in_polygon(p0, vertices) or point_in_polygon(p1, vertices):
        return True
    v = np.asarray(vertices)
    n = len(v)
    for i in range(n):
        if segments_intersect(p0, p1, v[i], v[(i + 1) % n]):
            return True
    return False


def polygons_overlap(a: np.ndarray, b: np.ndarray) -> bool:
    """Separating-axis test for two convex polygons (touching counts)."""
    for poly in (a, b):
        v = np.asarray(poly)
        edges = np.roll(v, -1, axis=0) - v
        # outward normals for CCW winding
        normals = np.stack([edges[:, 1], -edges[:, 0]], axis=1)
        pa = np.asarray(a) @ normals.T
        pb = np.asarray(b) @ normals.T
        separated = (pa.max(axis=0) < pb.min(axis=0) - EPS) | (
            pb.max(axis=0) < pa.min(axis=0) - EPS
        )
        if separated.any():
            return False
    return True
