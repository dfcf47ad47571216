"""The session loop: interaction events in, state deltas out.

One Session owns a registry, graph, context tracker, interaction links,
and inference pipeline, and applies events strictly in seq order. Each
applied event runs the same spine:

    validate → mutate → sync proximity links → recompute the window
    → fire at most one inference trigger → pump the pipeline → diff

Selection is an ordered set toggled by pinch; sweeps advance it along a
cone; voice resolves referents into the mentioned set (which persists
until the next utterance). A selection settling on ≥ 2 nodes, a voice
request, or aiming a held object each issue exactly one reasoner flow;
detection frames never trigger relation inference by themselves.

Events that reference dead ids are dropped whole — no partial
application — with a diagnostic in the result.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field

import numpy as np

from . import events
from .config import EngineConfig
from .context import ContextTracker, ContextWindow
from .deltas import diff
from .events import InteractionEvent
from .geometry import (
    CameraFrame,
    GeometryError,
    Pose,
    SceneMesh,
    pixel_to_ray,
    raycast,
    within_band,
)
from .graph import GraphError, Initiative, InteractionLinks, SemanticGraph
from .inference import InferencePipeline, PipelineNote, SerialExecutor
from .reasoner import Reasoner
from .registry import Detection2D, SceneRegistry
from .schemas import filter_detections

log = logging.getLogger(__name__)


class ClarificationError(ValueError):
    """An utterance that cannot be grounded; the user must rephrase."""


class _Drop(Exception):
    """Internal: abort event application before any mutation."""


@dataclass
class ApplyResult:
    seq: int
    applied: bool
    delta: dict
    notes: list[PipelineNote] = field(default_factory=list)
    diagnostics: list[str] = field(default_factory=list)


# -- referent resolution -------------------------------------------------------

_DEICTIC_PAIR = re.compile(r"\b(these|those)\s+two\b")
_DEICTIC = re.compile(r"\b(this|these|those)\b")


def _phrase_pattern(phrase: str) -> re.Pattern:
    words = [re.escape(w) for w in phrase.lower().split()]
    return re.compile(r"\b" + r"\s+".join(words) + r"\b")


def _pluralize(phrase: str) -> str:
    head, _, last = phrase.strip().rpartition(" ")
    last = last or phrase.strip()
    plural = last + ("es" if last.endswith(("s", "x", "ch", "sh")) else "s")
    return f"{head} {plural}".strip()


def resolve_deictic(
    utterance: str, selection_order, window: ContextWindow, registry: SceneRegistry
) -> list[str]:
    """Ground an utterance's referents to node ids.

    Precedence: deictic ("these two" → last 2 selected, "this/these" →
    current selection) > explicit names (exact label/synonym phrase) >
    category (pluralized label phrase; window matches shadow the rest of
    the registry). Empty resolution raises ClarificationError.
    """
    text = utterance.lower()
    if _DEICTIC_PAIR.search(text):
        if len(selection_order) < 2:
            raise ClarificationError(
                "Which two? Select both objects first, then ask again."
            )
        return list(selection_order[-2:])
    if _DEICTIC.search(text):
        if not selection_order:
            raise ClarificationError("Which objects? Select them first, then ask again.")
        return list(selection_order)

    nodes = sorted(registry.nodes_snapshot(), key=lambda n: n.id)
    named = [
        n.id
        for n in nodes
        if any(_phrase_pattern(p).search(text) for p in (n.label, *n.synonyms))
    ]
    if named:
        return named

    categorical = [
        n
        for n in nodes
        if any(_phrase_pattern(_pluralize(p)).search(text) for p in (n.label, *n.synonyms))
    ]
    if categorical:
        in_window = [n.id for n in categorical if window.has(n.id)]
        return in_window or [n.id for n in categorical]
    raise ClarificationError("I couldn't match that to any object in the scene.")


# -- sweep ----------------------------------------------------------------------


def _sweep_world_direction(direction, gaze) -> np.ndarray | None:
    """Map a view-plane sweep (+x right, +y away) onto the horizontal plane."""
    g = np.asarray(gaze, dtype=np.float64)
    right = np.cross(g, np.array([0.0, 1.0, 0.0]))
    if np.linalg.norm(right) < 1e-9:  # looking straight up/down
        right = np.array([1.0, 0.0, 0.0])
    right /= np.linalg.norm(right)
    forward = np.array([g[0], 0.0, g[2]])
    if np.linalg.norm(forward) < 1e-9:
        forward = np.cross(np.array([0.0, 1.0, 0.0]), right)
    forward /= np.linalg.norm(forward)
    world = direction[0] * right + direction[1] * forward
    world[1] = 0.0
    norm = float(np.linalg.norm(world))
    if norm < 1e-9:
        return None
    return world / norm


def sweep_advance(
    selection_order, direction, nodes, gaze, config: EngineConfig
) -> str | None:
    """The nearest unselected node inside the sweep cone, or None.

    The cone opens from the last selected node along the sweep direction
    (both projected to the horizontal plane) with the configured half
    angle; distance and ties are settled in that plane, ties by node id.
    """
    by_id = {n.id: n for n in nodes}
    last = by_id.get(selection_order[-1])
    if last is None:
        return None
    world = _sweep_world_direction(direction, gaze)
    if world is None:
        return None
    cos_limit = math.cos(math.radians(config.sweep_cone_half_angle_deg))
    selected = set(selection_order)
    best_id, best_dist = None, float("inf")
    for node in sorted(nodes, key=lambda n: n.id):
        if node.id in selected:
            continue
        offset = np.asarray(node.position) - np.asarray(last.position)
        offset[1] = 0.0
        dist = float(np.linalg.norm(offset))
        if dist < 1e-9:
            continue  # coincident in plan view: no direction to test
        if float(np.dot(offset / dist, world)) >= cos_limit and dist < best_dist:
            best_id, best_dist = node.id, dist
    return best_id


# -- the session ------------------------------------------------------------------


class Session:
    """Single-writer event loop over one scene.

    `apply` is the only mutation entry point; everything else is a read.
    """

    def __init__(
        self,
        mesh: SceneMesh,
        reasoner: Reasoner,
        executor=None,
        config: EngineConfig | None = None,
        camera: CameraFrame | None = None,
    ):
        self.config = config or EngineConfig()
        self.mesh = mesh
        self.camera = camera
        self.registry = SceneRegistry(self.config)
        self.graph = SemanticGraph(self.registry, self.config)
        self.tracker = ContextTracker(self.config)
        self.links = InteractionLinks()
        self.pipeline = InferencePipeline(
            self.graph,
            self.tracker,
            reasoner,
            executor or SerialExecutor(),
            self.config,
            objects_provider=self._serialize_nodes,
        )
        self.selection: list[str] = []
        self.mentioned: list[str] = []
        self.clock = 0.0
        self.last_seq = -1

    def _serialize_nodes(self, ids) -> list[dict]:
        out = []
        for node_id in ids:
            node = self.registry.get(node_id)
            if node is not None:
                out.append(
                    {"id": node.id, "label": node.label, "position": list(node.position)}
                )
        return out

    # -- reads --------------------------------------------------------------

    def state(self) -> dict:
        """The full observable state as plain JSON (see deltas.empty_state)."""
        return {
            "nodes": {n.id: n.to_json() for n in self.registry.nodes_snapshot()},
            "user": self.registry.user_snapshot().to_json(),
            "links": [l.to_json() for l in self.links.snapshot()],
            "edges": {e.id: e.to_json() for e in self.graph.edges_snapshot()},
            "proposals": self.pipeline.offers_state(),
            "selection_order": list(self.selection),
            "epoch": self.tracker.epoch_of(),
        }

    def idle(self) -> bool:
        return self.pipeline.idle()

    # -- the single mutation entry point --------------------------------------

    def apply(self, event: InteractionEvent) -> ApplyResult:
        if event.seq <= self.last_seq:
            return ApplyResult(
                event.seq,
                applied=False,
                delta={"seq": event.seq},
                diagnostics=[f"seq {event.seq} not after {self.last_seq}; event dropped"],
            )
        self.last_seq = event.seq
        before = self.state()
        now = max(self.clock, event.time)
        notes: list[PipelineNote] = []
        diagnostics: list[str] = []
        try:
            trigger = self._dispatch(event, now, notes, diagnostics)
        except _Drop as drop:
            log.debug("dropped event seq=%d kind=%s: %s", event.seq, event.kind, drop)
            return ApplyResult(
                event.seq,
                applied=False,
                delta={"seq": event.seq},
                notes=notes,
                diagnostics=diagnostics + [f"{event.kind}: {drop}"],
            )

        self.clock = now
        self._sync_proximity(now)
        self._recompute(now)
        self._fire(trigger, now, notes)
        notes.extend(self.pipeline.pump(now))

        delta = diff(before, self.state())
        delta["seq"] = event.seq
        if self.config.include_window_in_deltas:
            delta["window"] = self.tracker.window.to_json()
        return ApplyResult(event.seq, True, delta, notes, diagnostics)

    def pump(self, now: float | None = None) -> tuple[dict, list[PipelineNote]]:
        """Drain pipeline results outside of event application (async
        executors); returns the resulting delta and notes."""
        now = self.clock if now is None else max(self.clock, now)
        self.clock = now
        before = self.state()
        notes = self.pipeline.pump(now)
        delta = diff(before, self.state())
        return delta, notes

    def close(self) -> None:
        self.pipeline.shutdown()

    # -- event handlers -------------------------------------------------------

    def _dispatch(self, event, now, notes, diagnostics):
        handler = getattr(self, f"_on_{event.kind}")
        return handler(event, now, notes, diagnostics)

    def _on_pinch_select(self, event, now, notes, diagnostics):
        node_id = event.get("node_id")
        if node_id is None:
            node_id = self._node_at_pixel(event.get("pixel"))
        elif not self.registry.has(node_id):
            raise _Drop(f"unknown node {node_id!r}")
        if node_id in self.selection:
            self.selection.remove(node_id)
        else:
            self.selection.append(node_id)
        if len(self.selection) >= 2:
            return ("classify", tuple(self.selection))
        return None

    def _on_sweep(self, event, now, notes, diagnostics):
        if not self.selection:
            raise _Drop("nothing selected to sweep from")
        next_id = sweep_advance(
            self.selection,
            event.get("direction"),
            self.registry.nodes_snapshot(),
            self.registry.user.gaze_direction,
            self.config,
        )
        if next_id is None:
            diagnostics.append("sweep: no candidate inside the cone")
            return None
        self.selection.append(next_id)
        if len(self.selection) >= 2:
            return ("classify", tuple(self.selection))
        return None

    def _on_voice(self, event, now, notes, diagnostics):
        utterance = event.get("utterance")
        try:
            mentioned = resolve_deictic(
                utterance, self.selection, self.tracker.window, self.registry
            )
        except ClarificationError as exc:
            notes.append(PipelineNote("clarification", text=str(exc)))
            return None
        self.mentioned = mentioned
        return ("voice", utterance)

    def _on_grab(self, event, now, notes, diagnostics):
        node_id = event.get("node_id")
        if not self.registry.has(node_id):
            raise _Drop(f"unknown node {node_id!r}")
        self.registry.set_held(node_id, True, now)
        self.links.set_holding(node_id, now)
        return None

    def _on_aim(self, event, now, notes, diagnostics):
        held_id = event.get("held_id")
        if held_id not in self.registry.user.held_ids:
            raise _Drop(f"{held_id!r} is not held")
        target_id = event.get("target_id")
        if target_id is None:
            target_id = self._node_at_pixel(event.get("target_pixel"))
        elif not self.registry.has(target_id):
            raise _Drop(f"unknown node {target_id!r}")
        if target_id == held_id:
            raise _Drop("aim target is the held object itself")
        self.registry.set_pointed(target_id)
        self.links.set_pointing(target_id, now)
        return ("held_pair", (held_id, target_id))

    def _on_release(self, event, now, notes, diagnostics):
        node_id = event.get("node_id")
        if node_id not in self.registry.user.held_ids:
            raise _Drop(f"{node_id!r} is not held")
        self.registry.set_held(node_id, False, now)
        self.links.clear_holding(node_id)
        return None

    def _on_confirm(self, event, now, notes, diagnostics):
        ref = event.get("ref_id")
        edge = self.graph.get(ref)
        if edge is not None:
            promoted = (
                Initiative.HYBRID
                if edge.initiative is Initiative.SYSTEM_INITIATED
                else None
            )
            self.graph.confirm_edge(ref, promoted)
            return None
        proposal = self.pipeline.proposal(ref)
        if proposal is not None and proposal.disposition == "needs_disambiguation":
            # bare confirm accepts the leading candidate
            return ("resolve", ref, proposal.candidates[0].value)
        raise _Drop(f"unknown edge or proposal {ref!r}")

    def _on_reject(self, event, now, notes, diagnostics):
        ref = event.get("ref_id")
        if self.graph.get(ref) is not None:
            self.graph.remove_edge(ref)
            return None
        if self.pipeline.reject_proposal(ref):
            return None
        raise _Drop(f"unknown edge or proposal {ref!r}")

    def _on_resolve(self, event, now, notes, diagnostics):
        return ("resolve", event.get("proposal_id"), event.get("relation"))

    def _on_clear_selection(self, event, now, notes, diagnostics):
        self.selection = []
        return None

    def _on_detection_frame(self, event, now, notes, diagnostics):
        try:
            camera = CameraFrame.from_json(event.get("frame"))
        except (GeometryError, KeyError, TypeError, ValueError) as exc:
            raise _Drop(f"bad camera frame: {exc}") from exc
        self.camera = camera
        valid, dropped = filter_detections(
            event.get("detections"), camera.width, camera.height
        )
        diagnostics.extend(dropped)
        detections = [
            Detection2D(
                box=tuple(det["box_2d"]),
                label=det["label"],
                description=det["description"],
                crop_ref=det["crop_ref"],
            )
            for det in valid
        ]
        results = self.registry.register_frame(camera, detections, self.mesh, now)
        for detection, result in zip(detections, results):
            if result is None:
                diagnostics.append(
                    f"detection {detection.label!r}: ray missed the scene mesh"
                )
        return None

    def _on_user_pose(self, event, now, notes, diagnostics):
        try:
            pose = Pose.from_json(event.get("pose"))
            self.registry.update_user(pose, event.get("gaze"), now)
        except (GeometryError, ValueError) as exc:
            raise _Drop(f"bad pose: {exc}") from exc
        return None

    def _on_tick(self, event, now, notes, diagnostics):
        return ("decay",)

    # -- spine helpers ----------------------------------------------------------

    def _node_at_pixel(self, pixel) -> str:
        if self.camera is None:
            raise _Drop("no camera frame seen yet; cannot resolve a pixel target")
        try:
            ray = pixel_to_ray(self.camera, pixel)
        except GeometryError as exc:
            raise _Drop(str(exc)) from exc
        hit = raycast(self.mesh, ray)
        if hit is None:
            raise _Drop(f"pixel {pixel} ray missed the scene mesh")
        node_id = self.registry.nearest_node(hit.point, self.config.target_snap_radius_m)
        if node_id is None:
            raise _Drop(f"no node within {self.config.target_snap_radius_m} m of hit")
        return node_id

    def _sync_proximity(self, now: float) -> None:
        user = self.registry.user
        near = {
            n.id
            for n in self.registry.nodes_snapshot()
            if within_band(user.pose, n.position, self.config.band_radius_m)
        }
        self.links.sync_proximate(near, now)

    def _recompute(self, now: float) -> None:
        self.tracker.recompute(
            self.registry.nodes_snapshot(),
            self.registry.user_snapshot(),
            self.selection,
            sorted(self.registry.user.held_ids),
            self.mentioned,
            now,
        )

    def _fire(self, trigger, now: float, notes: list[PipelineNote]) -> None:
        if trigger is None:
            return
        kind = trigger[0]
        if kind == "classify":
            self.pipeline.propose_for_selection(trigger[1], now)
        elif kind == "held_pair":
            self.pipeline.propose_for_held_pair(trigger[1], now)
        elif kind == "voice":
            self.pipeline.propose_for_voice(trigger[1], tuple(self.mentioned), now)
        elif kind == "resolve":
            notes.extend(self.pipeline.resolve_disambiguation(trigger[1], trigger[2], now))
        elif kind == "decay":
            removed = self.graph.decay_tick(
                now, self.tracker.epoch_of(), self.registry.user.held_ids
            )
            if removed.removed_ids:
                log.debug("decay removed %s", ", ".join(removed.removed_ids))
        else:  # pragma: no cover - defensive
            raise AssertionError(f"unknown trigger {kind!r}")


def replay_events(session: Session, raw_events) -> list[ApplyResult]:
    """Parse + apply a JSON event list in order (helper for replay/tests)."""
    return [session.apply(events.parse_event(raw)) for raw in raw_events]
