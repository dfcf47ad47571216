"""Shared test fixtures: random scene generators and independent oracles.

The oracles here deliberately use different formulations than the library
(plane-intersection + barycentric instead of Moeller-Trumbore, scalar math
instead of vectorized numpy) so agreement is meaningful.
"""

from __future__ import annotations

import math
import random

from scenelink.geometry import CameraFrame, Pose


def random_unit_quaternion(rng: random.Random) -> tuple[float, float, float, float]:
    # Shoemake's uniform quaternion sampling
    u1, u2, u3 = rng.random(), rng.random(), rng.random()
    a = math.sqrt(1 - u1)
    b = math.sqrt(u1)
    q = (
        a * math.sin(2 * math.pi * u2),
        a * math.cos(2 * math.pi * u2),
        b * math.sin(2 * math.pi * u3),
        b * math.cos(2 * math.pi * u3),
    )
    norm = math.sqrt(sum(x * x for x in q))
    return tuple(x / norm for x in q)  # type: ignore[return-value]


def random_pose(rng: random.Random, span: float = 3.0) -> Pose:
    pos = tuple(rng.uniform(-span, span) for _ in range(3))
    return Pose(pos, random_unit_quaternion(rng))


def random_camera(rng: random.Random) -> CameraFrame:
    w = rng.choice([320, 640, 800])
    h = rng.choice([240, 480, 600])
    return CameraFrame(
        pose=random_pose(rng),
        fx=rng.uniform(200, 900),
        fy=rng.uniform(200, 900),
        cx=rng.uniform(0.25, 0.75) * w,
        cy=rng.uniform(0.25, 0.75) * h,
        width=w,
        height=h,
    )


def random_mesh_arrays(rng: random.Random, n_tris: int, span: float = 4.0):
    """Random triangle soup with no degenerate triangles."""
    vertices: list[list[float]] = []
    triangles: list[list[int]] = []
    for _ in range(n_tris):
        while True:
            a = [rng.uniform(-span, span) for _ in range(3)]
            b = [a[i] + rng.uniform(-1.5, 1.5) for i in range(3)]
            c = [a[i] + rng.uniform(-1.5, 1.5) for i in range(3)]
            if _tri_area(a, b, c) > 1e-6:
                break
        base = len(vertices)
        vertices.extend([a, b, c])
        triangles.append([base, base + 1, base + 2])
    return vertices, triangles


def _sub(a, b):
    return (a[0] - b[0], a[1] - b[1], a[2] - b[2])


def _cross(a, b):
    return (
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    )


def _dot(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def _norm(a):
    return math.sqrt(_dot(a, a))


def _tri_area(a, b, c) -> float:
    return 0.5 * _norm(_cross(_sub(b, a), _sub(c, a)))


def oracle_ray_triangle(origin, direction, a, b, c) -> float | None:
    """Forward hit distance via plane intersection + barycentric test, else None."""
    n = _cross(_sub(b, a), _sub(c, a))
    denom = _dot(direction, n)
    if abs(denom) < 1e-12:
        return None
    t = _dot(_sub(a, origin), n) / denom
    if t <= 1e-12:
        return None
    p = (origin[0] + t * direction[0], origin[1] + t * direction[1], origin[2] + t * direction[2])
    # barycentric coordinates of p in triangle (a, b, c)
    v0 = _sub(b, a)
    v1 = _sub(c, a)
    v2 = _sub(p, a)
    d00 = _dot(v0, v0)
    d01 = _dot(v0, v1)
    d11 = _dot(v1, v1)
    d20 = _dot(v2, v0)
    d21 = _dot(v2, v1)
    denom2 = d00 * d11 - d01 * d01
    if abs(denom2) < 1e-18:
        return None
    v = (d11 * d20 - d01 * d21) / denom2
    w = (d00 * d21 - d01 * d20) / denom2
    u = 1.0 - v - w
    if u < -1e-12 or v < -1e-12 or w < -1e-12:
        return None
    return t


def oracle_raycast(vertices, triangles, origin, direction):
    """Exhaustive nearest-hit search over every triangle; (distance, index) or None."""
    best: tuple[float, int] | None = None
    for idx, (i, j, k) in enumerate(triangles):
        t = oracle_ray_triangle(origin, direction, vertices[i], vertices[j], vertices[k])
        if t is not None and (best is None or t < best[0]):
            best = (t, idx)
    return best


def quat_to_matrix(q):
    """3x3 rotation matrix rows from a unit quaternion (w, x, y, z)."""
    w, x, y, z = q
    return (
        (1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)),
        (2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)),
        (2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)),
    )


def oracle_unproject(frame: CameraFrame, pixel):
    """Pixel to world-space unit direction via an explicit rotation matrix."""
    u, v = pixel
    d_cam = ((u - frame.cx) / frame.fx, -(v - frame.cy) / frame.fy, -1.0)
    m = quat_to_matrix(frame.pose.orientation)
    d_world = tuple(_dot(row, d_cam) for row in m)
    n = _norm(d_world)
    return tuple(x / n for x in d_world)
