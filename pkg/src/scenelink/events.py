"""The interaction event vocabulary: one JSON shape, one validator.

Events are how anything happens in a session — the live service, the
scenario replay harness, and the tests all feed the same shapes through
``parse_event``. Every event carries ``seq`` (assigned by the ordering
authority), ``time`` (seconds), ``kind``, and kind-specific fields; the
key set per kind is closed, so a typo fails loudly at parse time instead
of silently skewing a replay.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Mapping

from .graph import RelationType
from .schemas import SchemaError, _array, _obj, _string

KIND_PINCH_SELECT = "pinch_select"
KIND_SWEEP = "sweep"
KIND_VOICE = "voice"
KIND_GRAB = "grab"
KIND_AIM = "aim"
KIND_RELEASE = "release"
KIND_CONFIRM = "confirm"
KIND_REJECT = "reject"
KIND_RESOLVE = "resolve"
KIND_CLEAR_SELECTION = "clear_selection"
KIND_DETECTION_FRAME = "detection_frame"
KIND_USER_POSE = "user_pose"
KIND_TICK = "tick"

#: every event kind → the full set of kind-specific fields it may carry
EVENT_FIELDS: dict[str, tuple[str, ...]] = {
    KIND_PINCH_SELECT: ("node_id", "pixel"),
    KIND_SWEEP: ("direction",),
    KIND_VOICE: ("utterance",),
    KIND_GRAB: ("node_id",),
    KIND_AIM: ("held_id", "target_id", "target_pixel"),
    KIND_RELEASE: ("node_id",),
    KIND_CONFIRM: ("ref_id",),
    KIND_REJECT: ("ref_id",),
    KIND_RESOLVE: ("proposal_id", "relation"),
    KIND_CLEAR_SELECTION: (),
    KIND_DETECTION_FRAME: ("frame", "detections"),
    KIND_USER_POSE: ("pose", "gaze"),
    KIND_TICK: (),
}

EVENT_KINDS = frozenset(EVENT_FIELDS)


@dataclass(frozen=True)
class InteractionEvent:
    """One validated event. ``args`` holds the kind-specific fields."""

    seq: int
    time: float
    kind: str
    args: Mapping[str, Any]

    def get(self, key: str, default=None):
        return self.args.get(key, default)

    def to_json(self) -> dict:
        return {"seq": self.seq, "time": self.time, "kind": self.kind, **self.args}


def _num(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(path, f"expected number, got {type(value).__name__}")
    if not math.isfinite(value):
        raise SchemaError(path, "expected finite number")
    return float(value)


def _vec(value, path: str, n: int) -> list[float]:
    arr = _array(value, path, min_len=n, max_len=n)
    return [_num(x, f"{path}[{i}]") for i, x in enumerate(arr)]


def _one_of(raw: Mapping, path: str, names: tuple[str, ...]) -> str:
    present = [n for n in names if n in raw]
    if len(present) != 1:
        raise SchemaError(path, f"expected exactly one of {', '.join(names)}")
    return present[0]


def _parse_pinch_select(raw, path):
    which = _one_of(raw, path, ("node_id", "pixel"))
    if which == "node_id":
        return {"node_id": _string(raw["node_id"], f"{path}.node_id")}
    return {"pixel": _vec(raw["pixel"], f"{path}.pixel", 2)}


def _parse_sweep(raw, path):
    direction = _vec(raw.get("direction"), f"{path}.direction", 2)
    if direction[0] == 0.0 and direction[1] == 0.0:
        raise SchemaError(f"{path}.direction", "zero-length direction")
    return {"direction": direction}


def _parse_voice(raw, path):
    return {"utterance": _string(raw.get("utterance"), f"{path}.utterance")}


def _parse_node_ref(raw, path):
    return {"node_id": _string(raw.get("node_id"), f"{path}.node_id")}


def _parse_aim(raw, path):
    args = {"held_id": _string(raw.get("held_id"), f"{path}.held_id")}
    which = _one_of(raw, path, ("target_id", "target_pixel"))
    if which == "target_id":
        args["target_id"] = _string(raw["target_id"], f"{path}.target_id")
    else:
        args["target_pixel"] = _vec(raw["target_pixel"], f"{path}.target_pixel", 2)
    return args


def _parse_edge_ref(raw, path):
    return {"ref_id": _string(raw.get("ref_id"), f"{path}.ref_id")}


def _parse_resolve(raw, path):
    relation = _string(raw.get("relation"), f"{path}.relation")
    if relation not in {r.value for r in RelationType}:
        raise SchemaError(f"{path}.relation", f"unknown relation type {relation!r}")
    return {
        "proposal_id": _string(raw.get("proposal_id"), f"{path}.proposal_id"),
        "relation": relation,
    }


def _parse_detection_frame(raw, path):
    frame = raw.get("frame")
    if not isinstance(frame, dict):
        raise SchemaError(f"{path}.frame", "expected camera frame object")
    detections = _array(raw.get("detections"), f"{path}.detections")
    return {"frame": frame, "detections": detections}


def _parse_user_pose(raw, path):
    pose = raw.get("pose")
    if not isinstance(pose, dict):
        raise SchemaError(f"{path}.pose", "expected pose object")
    _vec(pose.get("position"), f"{path}.pose.position", 3)
    if "orientation" in pose:
        _vec(pose["orientation"], f"{path}.pose.orientation", 4)
    unknown = set(pose) - {"position", "orientation"}
    if unknown:
        raise SchemaError(f"{path}.pose", f"unknown field(s) {', '.join(sorted(unknown))}")
    return {"pose": pose, "gaze": _vec(raw.get("gaze"), f"{path}.gaze", 3)}


def _parse_none(raw, path):
    return {}


_PARSERS = {
    KIND_PINCH_SELECT: _parse_pinch_select,
    KIND_SWEEP: _parse_sweep,
    KIND_VOICE: _parse_voice,
    KIND_GRAB: _parse_node_ref,
    KIND_AIM: _parse_aim,
    KIND_RELEASE: _parse_node_ref,
    KIND_CONFIRM: _parse_edge_ref,
    KIND_REJECT: _parse_edge_ref,
    KIND_RESOLVE: _parse_resolve,
    KIND_CLEAR_SELECTION: _parse_none,
    KIND_DETECTION_FRAME: _parse_detection_frame,
    KIND_USER_POSE: _parse_user_pose,
    KIND_TICK: _parse_none,
}


def parse_event(raw, path: str = "event") -> InteractionEvent:
    """Validate raw JSON into an InteractionEvent; raises SchemaError."""
    if not isinstance(raw, Mapping):
        raise SchemaError(path, f"expected object, got {type(raw).__name__}")
    kind = raw.get("kind")
    if not isinstance(kind, str) or kind not in EVENT_KINDS:
        raise SchemaError(f"{path}.kind", f"unknown event kind {kind!r}")
    _obj(dict(raw), path, required=("seq", "time", "kind"), optional=EVENT_FIELDS[kind])
    seq = raw["seq"]
    if isinstance(seq, bool) or not isinstance(seq, int) or seq < 0:
        raise SchemaError(f"{path}.seq", f"expected non-negative integer, got {seq!r}")
    t = _num(raw["time"], f"{path}.time")
    if t < 0:
        raise SchemaError(f"{path}.time", f"expected non-negative time, got {t}")
    args = _PARSERS[kind](raw, path)
    return InteractionEvent(seq=seq, time=t, kind=kind, args=args)


def event(kind: str, seq: int, time: float, **fields) -> InteractionEvent:
    """Build + validate an event in one call (test/scenario convenience)."""
    return parse_event({"seq": seq, "time": time, "kind": kind, **fields})
