"""Persistent, deduplicated, scene-anchored object nodes plus the user node.

Detections arrive as 2D boxes with labels; each is anchored by raycasting
its box center through the scene mesh. A hit either updates an existing
node in place (same label or synonym within the re-identification radius)
or creates a new one. Misses are rejected so unanchorable detections are
dropped upstream.

Single-writer: all mutations flow through the owning session loop.
Snapshots are plain copies, safe to share.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .config import EngineConfig
from .geometry import CameraFrame, Pose, Ray, SceneMesh, distance, pixel_to_ray, raycast

log = logging.getLogger(__name__)

USER_NODE_ID = "user"


class DetectionError(ValueError):
    """Detection fails its structural checks (bbox, label length)."""


@dataclass(frozen=True)
class Detection2D:
    """One 2D detection: pixel box, short label, description, optional crop ref."""

    box: tuple[float, float, float, float]  # x_min, y_min, x_max, y_max (pixels)
    label: str
    description: str = ""
    crop_ref: str | None = None

    def validate(self, frame: CameraFrame) -> None:
        x0, y0, x1, y1 = self.box
        if not (x0 < x1 and y0 < y1):
            raise DetectionError(f"empty bbox {self.box}")
        if not (0 <= x0 and x1 <= frame.width and 0 <= y0 and y1 <= frame.height):
            raise DetectionError(f"bbox {self.box} outside {frame.width}x{frame.height} frame")
        if not self.label.strip():
            raise DetectionError("empty label")
        if len(self.label.split()) > 4:
            raise DetectionError(f"label {self.label!r} longer than 4 words")

    def center(self) -> tuple[float, float]:
        x0, y0, x1, y1 = self.box
        return ((x0 + x1) / 2.0, (y0 + y1) / 2.0)


@dataclass
class ObjectNode:
    """A scene-anchored physical object."""

    id: str
    label: str
    pose: Pose
    extent: tuple[float, float, float]  # approximate axis-aligned half-sizes, meters
    synonyms: list[str] = field(default_factory=list)
    crop_ref: str | None = None
    last_seen: float = 0.0
    held: bool = False
    last_manipulated: float | None = None

    @property
    def position(self) -> tuple[float, float, float]:
        return self.pose.position

    def matches_label(self, label: str) -> bool:
        needle = label.strip().lower()
        if needle == self.label.strip().lower():
            return True
        return needle in (s.strip().lower() for s in self.synonyms)

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "label": self.label,
            "synonyms": sorted(self.synonyms),
            "position": list(self.pose.position),
            "orientation": list(self.pose.orientation),
            "extent": list(self.extent),
            "crop_ref": self.crop_ref,
            "last_seen": self.last_seen,
            "held": self.held,
            "last_manipulated": self.last_manipulated,
        }


@dataclass
class UserNode:
    """The agent-centric node anchoring the context window."""

    pose: Pose = Pose((0.0, 0.0, 0.0))
    gaze_direction: tuple[float, float, float] = (0.0, 0.0, -1.0)
    held_ids: set[str] = field(default_factory=set)
    pointed_id: str | None = None
    updated_at: float = 0.0

    def to_json(self) -> dict:
        return {
            "id": USER_NODE_ID,
            "position": list(self.pose.position),
            "orientation": list(self.pose.orientation),
            "gaze": list(self.gaze_direction),
            "held_ids": sorted(self.held_ids),
            "pointed_id": self.pointed_id,
        }


@dataclass(frozen=True)
class RegistrationResult:
    node_id: str
    created: bool
    hit_point: tuple[float, float, float]


class SceneRegistry:
    """Node store: detections in, stable ids out. Ids are never reused."""

    def __init__(self, config: EngineConfig | None = None):
        self.config = config or EngineConfig()
        self._nodes: dict[str, ObjectNode] = {}
        self._counter = 0
        self.user = UserNode()

    # -- queries ---------------------------------------------------------

    def get(self, node_id: str) -> ObjectNode | None:
        return self._nodes.get(node_id)

    def has(self, node_id: str) -> bool:
        return node_id in self._nodes

    def ids(self) -> list[str]:
        return list(self._nodes)

    def nodes_snapshot(self) -> list[ObjectNode]:
        """Point-in-time copies of every object node."""
        return [replace(n, synonyms=list(n.synonyms)) for n in self._nodes.values()]

    def user_snapshot(self) -> UserNode:
        u = self.user
        return UserNode(
            pose=u.pose,
            gaze_direction=u.gaze_direction,
            held_ids=set(u.held_ids),
            pointed_id=u.pointed_id,
            updated_at=u.updated_at,
        )

    def __len__(self) -> int:
        return len(self._nodes)

    # -- mutations -------------------------------------------------------

    def register_detection(
        self,
        frame: CameraFrame,
        det: Detection2D,
        mesh: SceneMesh,
        now: float,
    ) -> RegistrationResult | None:
        """Anchor a single detection; returns None when the ray misses the mesh."""
        return self._register(frame, det, mesh, now, exclude=frozenset())

    def register_frame(
        self,
        frame: CameraFrame,
        detections: list[Detection2D],
        mesh: SceneMesh,
        now: float,
    ) -> list[RegistrationResult | None]:
        """Anchor one frame's detections as a simultaneous observation set.

        Each node can absorb at most one detection per frame: a frame is a
        single synchronous look at the scene, so two same-label boxes are two
        objects, and a node never chases successive boxes within the frame.
        Matching therefore only ever sees pre-frame node positions (claimed
        nodes are excluded, unclaimed ones have not moved), which makes
        replaying the same frame a no-op on the node set.
        """
        results: list[RegistrationResult | None] = []
        claimed: set[str] = set()
        for det in detections:
            result = self._register(frame, det, mesh, now, exclude=claimed)
            if result is not None:
                claimed.add(result.node_id)
            results.append(result)
        return results

    def _register(
        self,
        frame: CameraFrame,
        det: Detection2D,
        mesh: SceneMesh,
        now: float,
        exclude,
    ) -> RegistrationResult | None:
        det.validate(frame)
        ray = pixel_to_ray(frame, det.center())
        hit = raycast(mesh, ray)
        if hit is None:
            log.debug("unanchorable detection %r: ray missed the scene mesh", det.label)
            return None

        existing = self._find_match(det.label, hit.point, exclude)
        if existing is not None:
            if existing.label.lower() != det.label.lower():
                # keep the previous canonical label reachable as a synonym
                old = existing.label
                existing.label = det.label
                lowered = {s.lower() for s in existing.synonyms}
                if old.lower() != det.label.lower() and old.lower() not in lowered:
                    existing.synonyms.append(old)
                existing.synonyms = [s for s in existing.synonyms if s.lower() != det.label.lower()]
            existing.pose = Pose(hit.point)
            existing.extent = self._estimate_extent(frame, det, hit.distance)
            if det.crop_ref is not None:
                existing.crop_ref = det.crop_ref
            existing.last_seen = now
            return RegistrationResult(existing.id, created=False, hit_point=hit.point)

        self._counter += 1
        node_id = f"n{self._counter}"
        self._nodes[node_id] = ObjectNode(
            id=node_id,
            label=det.label,
            pose=Pose(hit.point),
            extent=self._estimate_extent(frame, det, hit.distance),
            crop_ref=det.crop_ref,
            last_seen=now,
        )
        return RegistrationResult(node_id, created=True, hit_point=hit.point)

    def _find_match(self, label: str, point, exclude=frozenset()) -> ObjectNode | None:
        """Nearest node with a matching label/synonym inside the re-id radius.

        Ties break toward the lexicographically smaller id so replays are
        insensitive to dict iteration order.
        """
        best: ObjectNode | None = None
        best_dist = float("inf")
        for node in sorted(self._nodes.values(), key=lambda n: n.id):
            if node.id in exclude or not node.matches_label(label):
                continue
            d = distance(node.position, point)
            if d <= self.config.reid_radius_m and d < best_dist:
                best = node
                best_dist = d
        return best

    def _estimate_extent(self, frame: CameraFrame, det: Detection2D, dist_m: float):
        # pinhole similar triangles: pixel span * depth / focal length
        x0, y0, x1, y1 = det.box
        hx = (x1 - x0) * dist_m / frame.fx / 2.0
        hy = (y1 - y0) * dist_m / frame.fy / 2.0
        hz = (hx + hy) / 2.0
        lo, hi = self.config.extent_min_m, self.config.extent_max_m
        return tuple(float(min(max(h, lo), hi)) for h in (hx, hy, hz))

    def update_user(self, pose: Pose, gaze, now: float) -> None:
        g = np.asarray(gaze, dtype=np.float64)
        if g.shape != (3,) or not np.all(np.isfinite(g)):
            raise ValueError("gaze must be a finite 3-vector")
        norm = float(np.linalg.norm(g))
        if abs(norm - 1.0) > 1e-6:
            if norm == 0:
                raise ValueError("gaze must be non-zero")
            g = g / norm
        self.user.pose = pose
        self.user.gaze_direction = tuple(float(x) for x in g)
        self.user.updated_at = now

    def set_held(self, node_id: str, held: bool, now: float) -> None:
        node = self._nodes[node_id]
        node.held = held
        node.last_manipulated = now
        if held:
            self.user.held_ids.add(node_id)
        else:
            self.user.held_ids.discard(node_id)

    def set_pointed(self, node_id: str | None) -> None:
        if node_id is not None and node_id not in self._nodes:
            raise KeyError(node_id)
        self.user.pointed_id = node_id

    def nearest_node(self, point, max_dist_m: float) -> str | None:
        """Nearest node id within a radius of a world point; ties by smaller id."""
        best_id: str | None = None
        best = float("inf")
        for node in sorted(self._nodes.values(), key=lambda n: n.id):
            d = distance(node.position, point)
            if d <= max_dist_m and d < best:
                best = d
                best_id = node.id
        return best_id
