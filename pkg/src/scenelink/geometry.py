"""Coordinate frames, ray-mesh intersection, and proximity math.

Conventions (shared by every module): right-handed world frame, meters,
y-up; the camera looks down its local -z axis; quaternions are unit
(w, x, y, z); pixel coordinates have +u right and +v down.

Everything here is a pure function over immutable inputs and safe to call
concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

_UNIT_TOL = 1e-9
_RAY_EPS = 1e-12


class GeometryError(ValueError):
    """Invalid geometric input (bad quaternion, out-of-bounds pixel, bad mesh)."""


def _as_vec3(v) -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    if arr.shape != (3,):
        raise GeometryError(f"expected a 3-vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise GeometryError("vector components must be finite")
    return arr


@dataclass(frozen=True)
class Pose:
    """Rigid 6-DoF pose: position in meters plus a unit quaternion (w, x, y, z)."""

    position: tuple[float, float, float]
    orientation: tuple[float, float, float, float] = (1.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        pos = _as_vec3(self.position)
        quat = np.asarray(self.orientation, dtype=np.float64)
        if quat.shape != (4,) or not np.all(np.isfinite(quat)):
            raise GeometryError("orientation must be a finite 4-component quaternion")
        norm = float(np.linalg.norm(quat))
        if abs(norm - 1.0) > _UNIT_TOL:
            raise GeometryError(f"quaternion norm {norm} not within {_UNIT_TOL} of 1")
        object.__setattr__(self, "position", tuple(float(x) for x in pos))
        object.__setattr__(self, "orientation", tuple(float(x) for x in quat))

    def rotate(self, v) -> np.ndarray:
        """Rotate a vector from the local frame into the world frame."""
        return quat_rotate(self.orientation, _as_vec3(v))

    def rotate_inverse(self, v) -> np.ndarray:
        w, x, y, z = self.orientation
        return quat_rotate((w, -x, -y, -z), _as_vec3(v))

    def to_json(self) -> dict:
        return {"position": list(self.position), "orientation": list(self.orientation)}

    @classmethod
    def from_json(cls, data: dict) -> "Pose":
        return cls(tuple(data["position"]), tuple(data.get("orientation", (1.0, 0.0, 0.0, 0.0))))


IDENTITY_POSE = Pose((0.0, 0.0, 0.0))


def quat_rotate(q, v) -> np.ndarray:
    """Rotate vector v by unit quaternion q = (w, x, y, z)."""
    w = q[0]
    u = np.asarray(q[1:], dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    # v' = v + 2w (u x v) + 2 (u x (u x v))
    uv = np.cross(u, v)
    return v + 2.0 * (w * uv + np.cross(u, uv))


@dataclass(frozen=True)
class Ray:
    """Origin plus unit direction."""

    origin: tuple[float, float, float]
    direction: tuple[float, float, float]

    def __post_init__(self):
        origin = _as_vec3(self.origin)
        direction = _as_vec3(self.direction)
        norm = float(np.linalg.norm(direction))
        if abs(norm - 1.0) > _UNIT_TOL:
            raise GeometryError(f"ray direction norm {norm} not within {_UNIT_TOL} of 1")
        object.__setattr__(self, "origin", tuple(float(x) for x in origin))
        object.__setattr__(self, "direction", tuple(float(x) for x in direction))


class SceneMesh:
    """Triangle mesh validated at load: indices in range, no zero-area triangles."""

    def __init__(self, vertices, triangles):
        verts = np.asarray(vertices, dtype=np.float64)
        if verts.size == 0:
            verts = verts.reshape(0, 3)
        if verts.ndim != 2 or verts.shape[1] != 3:
            raise GeometryError("vertices must be an (N, 3) array")
        if not np.all(np.isfinite(verts)):
            raise GeometryError("vertex coordinates must be finite")
        tris = np.asarray(triangles, dtype=np.int64)
        if tris.size == 0:
            tris = tris.reshape(0, 3)
        if tris.ndim != 2 or tris.shape[1] != 3:
            raise GeometryError("triangles must be an (M, 3) array of vertex indices")
        if tris.size and (tris.min() < 0 or tris.max() >= len(verts)):
            raise GeometryError("triangle index out of range")
        self.vertices = verts
        self.triangles = tris
        if len(tris):
            a = verts[tris[:, 0]]
            b = verts[tris[:, 1]]
            c = verts[tris[:, 2]]
            areas = 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)
            bad = np.nonzero(areas <= _RAY_EPS)[0]
            if bad.size:
                raise GeometryError(f"degenerate (zero-area) triangle at index {int(bad[0])}")
            # precomputed edges for raycasting
            self._a = a
            self._e1 = b - a
            self._e2 = c - a
        else:
            self._a = np.zeros((0, 3))
            self._e1 = np.zeros((0, 3))
            self._e2 = np.zeros((0, 3))

    @classmethod
    def from_json(cls, data: dict) -> "SceneMesh":
        if not isinstance(data, dict) or "vertices" not in data or "triangles" not in data:
            raise GeometryError("mesh JSON needs 'vertices' and 'triangles'")
        return cls(data["vertices"], data["triangles"])

    def to_json(self) -> dict:
        return {
            "vertices": [[float(x) for x in v] for v in self.vertices],
            "triangles": [[int(i) for i in t] for t in self.triangles],
        }


@dataclass(frozen=True)
class CameraFrame:
    """Pinhole camera: pose, focal lengths / principal point in pixels, image size."""

    pose: Pose
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise GeometryError("focal lengths must be positive")
        if not (0 <= self.cx <= self.width and 0 <= self.cy <= self.height):
            raise GeometryError("principal point must lie inside the image bounds")

    def to_json(self) -> dict:
        return {
            "pose": self.pose.to_json(),
            "intrinsics": {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy},
            "image_size": [self.width, self.height],
        }

    @classmethod
    def from_json(cls, data: dict) -> "CameraFrame":
        intr = data["intrinsics"]
        w, h = data["image_size"]
        return cls(
            pose=Pose.from_json(data["pose"]),
            fx=float(intr["fx"]),
            fy=float(intr["fy"]),
            cx=float(intr["cx"]),
            cy=float(intr["cy"]),
            width=int(w),
            height=int(h),
        )


@dataclass(frozen=True)
class RayHit:
    point: tuple[float, float, float]
    distance: float
    triangle_index: int


def pixel_to_ray(frame: CameraFrame, pixel) -> Ray:
    """Unproject a pixel through the pinhole model into a world-space ray.

    Raises GeometryError when the pixel lies outside the image bounds.
    """
    u, v = float(pixel[0]), float(pixel[1])
    if not (0 <= u <= frame.width and 0 <= v <= frame.height):
        raise GeometryError(f"pixel ({u}, {v}) outside {frame.width}x{frame.height} image")
    # camera frame: +x right, +y up, looking down -z; +v is down in the image
    d_cam = np.array([(u - frame.cx) / frame.fx, -(v - frame.cy) / frame.fy, -1.0])
    d_world = frame.pose.rotate(d_cam)
    d_world = d_world / np.linalg.norm(d_world)
    return Ray(origin=frame.pose.position, direction=tuple(d_world))


def project_point(frame: CameraFrame, point) -> tuple[float, float] | None:
    """Project a world point to pixel coordinates; None when behind the camera."""
    p_cam = frame.pose.rotate_inverse(_as_vec3(point) - np.asarray(frame.pose.position))
    if p_cam[2] >= 0:
        return None
    depth = -p_cam[2]
    u = frame.cx + frame.fx * (p_cam[0] / depth)
    v = frame.cy - frame.fy * (p_cam[1] / depth)
    return (float(u), float(v))


def raycast(mesh: SceneMesh, ray: Ray) -> RayHit | None:
    """Nearest forward intersection of a ray with the mesh, or None on a miss.

    Vectorized Moeller-Trumbore over all triangles; the nearest strictly
    positive hit wins, ties broken by triangle index.
    """
    if len(mesh.triangles) == 0:
        return None
    origin = np.asarray(ray.origin)
    direction = np.asarray(ray.direction)

    pvec = np.cross(direction, mesh._e2)
    det = np.einsum("ij,ij->i", mesh._e1, pvec)
    parallel = np.abs(det) < _RAY_EPS
    inv_det = 1.0 / np.where(parallel, 1.0, det)

    tvec = origin - mesh._a
    u = np.einsum("ij,ij->i", tvec, pvec) * inv_det
    qvec = np.cross(tvec, mesh._e1)
    v = np.einsum("j,ij->i", direction, qvec) * inv_det
    t = np.einsum("ij,ij->i", mesh._e2, qvec) * inv_det

    valid = (~parallel) & (u >= 0.0) & (v >= 0.0) & (u + v <= 1.0) & (t > _RAY_EPS)
    if not np.any(valid):
        return None
    t_masked = np.where(valid, t, np.inf)
    idx = int(np.argmin(t_masked))
    distance = float(t_masked[idx])
    point = origin + distance * direction
    return RayHit(point=tuple(float(x) for x in point), distance=distance, triangle_index=idx)


def within_band(user_pose: Pose, node_position, band_radius_m: float) -> bool:
    """True iff the node lies within (closed band, <=) the radius of the user."""
    if band_radius_m <= 0:
        raise GeometryError("band radius must be positive")
    delta = _as_vec3(node_position) - np.asarray(user_pose.position)
    return float(np.linalg.norm(delta)) <= band_radius_m


def distance(a, b) -> float:
    return float(np.linalg.norm(_as_vec3(a) - _as_vec3(b)))
