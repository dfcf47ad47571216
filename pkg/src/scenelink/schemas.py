"""Strict validators for everything the reasoner returns.

Each relation type has a fixed payload shape; responses are plain JSON and
get checked field-by-field (exact types, closed key sets, ids resolved
against the current context) before anything touches the graph. A failed
check raises SchemaError with a path-precise message and leaves no partial
state behind.
"""

from __future__ import annotations

from dataclasses import dataclass

from .graph import RelationType

SPATIAL_PREPOSITIONS = ("on", "in", "near", "next-to", "above", "below")


class SchemaError(ValueError):
    """Reasoner output violates its payload schema."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


# -- field primitives ------------------------------------------------------


def _obj(value, path: str, required: tuple[str, ...], optional: tuple[str, ...] = ()) -> dict:
    if not isinstance(value, dict):
        raise SchemaError(path, f"expected object, got {type(value).__name__}")
    missing = [k for k in required if k not in value]
    if missing:
        raise SchemaError(path, f"missing field(s) {', '.join(missing)}")
    unknown = [k for k in value if k not in required and k not in optional]
    if unknown:
        raise SchemaError(path, f"unknown field(s) {', '.join(sorted(unknown))}")
    return value


def _string(value, path: str, allow_empty: bool = False) -> str:
    if not isinstance(value, str):
        raise SchemaError(path, f"expected string, got {type(value).__name__}")
    if not allow_empty and not value.strip():
        raise SchemaError(path, "expected non-empty string")
    return value


def _boolean(value, path: str) -> bool:
    # bool is checked exactly: 0/1/"true" are not acceptable coercions here
    if not isinstance(value, bool):
        raise SchemaError(path, f"expected boolean, got {type(value).__name__}")
    return value


def _number(value, path: str, lo: float, hi: float) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(path, f"expected number, got {type(value).__name__}")
    if not lo <= value <= hi:
        raise SchemaError(path, f"{value} outside [{lo}, {hi}]")
    return float(value)


def _node_id(value, path: str, context_ids: frozenset[str]) -> str:
    ref = _string(value, path)
    if ref not in context_ids:
        raise SchemaError(path, f"{ref!r} does not resolve to a context node")
    return ref


def _array(value, path: str, min_len: int = 0, max_len: int | None = None) -> list:
    if not isinstance(value, list):
        raise SchemaError(path, f"expected array, got {type(value).__name__}")
    if len(value) < min_len:
        raise SchemaError(path, f"expected at least {min_len} item(s), got {len(value)}")
    if max_len is not None and len(value) > max_len:
        raise SchemaError(path, f"expected at most {max_len} item(s), got {len(value)}")
    return value


# -- relation payloads -----------------------------------------------------


def _validate_comparison(raw, ids):
    _obj(raw, "comparison", ("attributes",))
    rows = _array(raw["attributes"], "comparison.attributes", min_len=3, max_len=3)
    out = []
    for i, row in enumerate(rows):
        path = f"comparison.attributes[{i}]"
        _obj(row, path, ("name", "value_a", "value_b"))
        out.append(
            {
                "name": _string(row["name"], f"{path}.name"),
                "value_a": _string(row["value_a"], f"{path}.value_a"),
                "value_b": _string(row["value_b"], f"{path}.value_b"),
            }
        )
    return {"attributes": out}


def _validate_similarity(raw, ids):
    _obj(raw, "similarity", ("sameType", "theme", "summary"))
    return {
        "sameType": _boolean(raw["sameType"], "similarity.sameType"),
        "theme": _string(raw["theme"], "similarity.theme"),
        "summary": _string(raw["summary"], "similarity.summary"),
    }


def _validate_structural(raw, ids):
    _obj(raw, "structural", ("parent", "children", "steps"))
    parent = _node_id(raw["parent"], "structural.parent", ids)
    children = [
        _node_id(c, f"structural.children[{i}]", ids)
        for i, c in enumerate(_array(raw["children"], "structural.children", min_len=1))
    ]
    if parent in children:
        raise SchemaError("structural.children", "parent listed among its own children")
    if len(set(children)) != len(children):
        raise SchemaError("structural.children", "duplicate child id")
    steps = [
        _string(s, f"structural.steps[{i}]")
        for i, s in enumerate(_array(raw["steps"], "structural.steps", min_len=1))
    ]
    return {"parent": parent, "children": children, "steps": steps}


def _validate_affordance(raw, ids):
    _obj(raw, "affordance", ("tool", "targets", "action"), optional=("tip",))
    tool = _node_id(raw["tool"], "affordance.tool", ids)
    targets = [
        _node_id(t, f"affordance.targets[{i}]", ids)
        for i, t in enumerate(_array(raw["targets"], "affordance.targets", min_len=1))
    ]
    if tool in targets:
        raise SchemaError("affordance.targets", "tool listed among its own targets")
    return {
        "tool": tool,
        "targets": targets,
        "action": _string(raw["action"], "affordance.action"),
        "tip": _string(raw.get("tip", ""), "affordance.tip", allow_empty=True),
    }


def _validate_compatibility(raw, ids):
    _obj(raw, "compatibility", ("incompatible", "warning"))
    incompatible = _boolean(raw["incompatible"], "compatibility.incompatible")
    warning = _string(raw["warning"], "compatibility.warning", allow_empty=not incompatible)
    return {"incompatible": incompatible, "warning": warning}


def _validate_procedural(raw, ids):
    _obj(raw, "procedural", ("task", "description", "steps"))
    steps = [
        _string(s, f"procedural.steps[{i}]")
        for i, s in enumerate(_array(raw["steps"], "procedural.steps", min_len=1))
    ]
    return {
        "task": _string(raw["task"], "procedural.task"),
        "description": _string(raw["description"], "procedural.description"),
        "steps": steps,
    }


def _validate_causality(raw, ids):
    _obj(raw, "causality", ("cause", "effects", "action", "consequence"))
    cause = _node_id(raw["cause"], "causality.cause", ids)
    effects = [
        _node_id(e, f"causality.effects[{i}]", ids)
        for i, e in enumerate(_array(raw["effects"], "causality.effects", min_len=1))
    ]
    if cause in effects:
        raise SchemaError("causality.effects", "cause listed among its own effects")
    return {
        "cause": cause,
        "effects": effects,
        "action": _string(raw["action"], "causality.action"),
        "consequence": _string(raw["consequence"], "causality.consequence"),
    }


def _validate_spatial(raw, ids):
    _obj(raw, "spatial", ("anchor", "referent", "preposition"))
    anchor = _node_id(raw["anchor"], "spatial.anchor", ids)
    referent = _node_id(raw["referent"], "spatial.referent", ids)
    if anchor == referent:
        raise SchemaError("spatial.referent", "anchor and referent must differ")
    prep = _string(raw["preposition"], "spatial.preposition")
    if prep not in SPATIAL_PREPOSITIONS:
        raise SchemaError(
            "spatial.preposition", f"{prep!r} not one of {', '.join(SPATIAL_PREPOSITIONS)}"
        )
    return {"anchor": anchor, "referent": referent, "preposition": prep}


_VALIDATORS = {
    RelationType.COMPARISON: _validate_comparison,
    RelationType.SIMILARITY: _validate_similarity,
    RelationType.STRUCTURAL: _validate_structural,
    RelationType.AFFORDANCE: _validate_affordance,
    RelationType.COMPATIBILITY: _validate_compatibility,
    RelationType.PROCEDURAL: _validate_procedural,
    RelationType.CAUSALITY: _validate_causality,
    RelationType.SPATIAL: _validate_spatial,
}


def validate_payload(relation: RelationType, raw, context_ids) -> dict:
    """Check a raw payload for `relation`; returns a normalized copy.

    Ids inside the payload must resolve within `context_ids`.
    """
    return _VALIDATORS[relation](raw, frozenset(context_ids))


def payload_endpoint_ids(relation: RelationType, payload: dict) -> list[str]:
    """Node ids referenced by a validated payload, source first."""
    if relation is RelationType.STRUCTURAL:
        return [payload["parent"], *payload["children"]]
    if relation is RelationType.AFFORDANCE:
        return [payload["tool"], *payload["targets"]]
    if relation is RelationType.CAUSALITY:
        return [payload["cause"], *payload["effects"]]
    if relation is RelationType.SPATIAL:
        return [payload["anchor"], payload["referent"]]
    return []


# -- type selection --------------------------------------------------------


@dataclass(frozen=True)
class TypeSelection:
    chosen: RelationType
    confidence: float
    reason: str
    alternate: RelationType | None = None
    alternate_confidence: float | None = None


def validate_type_selection(raw) -> TypeSelection:
    _obj(raw, "type_selection", ("type", "confidence"), optional=("reason", "alternate"))
    type_name = _string(raw["type"], "type_selection.type")
    try:
        chosen = RelationType(type_name)
    except ValueError:
        raise SchemaError(
            "type_selection.type", f"{type_name!r} is not one of the 8 relation types"
        ) from None
    confidence = _number(raw["confidence"], "type_selection.confidence", 0.0, 1.0)
    reason = _string(raw.get("reason", ""), "type_selection.reason", allow_empty=True)
    alternate = None
    alt_conf = None
    if "alternate" in raw and raw["alternate"] is not None:
        alt = _obj(raw["alternate"], "type_selection.alternate", ("type", "confidence"))
        alt_name = _string(alt["type"], "type_selection.alternate.type")
        try:
            alternate = RelationType(alt_name)
        except ValueError:
            raise SchemaError(
                "type_selection.alternate.type",
                f"{alt_name!r} is not one of the 8 relation types",
            ) from None
        alt_conf = _number(alt["confidence"], "type_selection.alternate.confidence", 0.0, 1.0)
        if alternate is chosen:
            raise SchemaError("type_selection.alternate.type", "alternate equals chosen type")
    return TypeSelection(chosen, confidence, reason, alternate, alt_conf)


# -- voice plans -----------------------------------------------------------


@dataclass(frozen=True)
class VoicePlan:
    relation: RelationType
    endpoint_ids: tuple[str, ...]


def validate_voice_plan(raw, context_ids) -> VoicePlan:
    _obj(raw, "voice_plan", ("type", "objects"))
    type_name = _string(raw["type"], "voice_plan.type")
    try:
        relation = RelationType(type_name)
    except ValueError:
        raise SchemaError(
            "voice_plan.type", f"{type_name!r} is not one of the 8 relation types"
        ) from None
    ids = frozenset(context_ids)
    objects = [
        _node_id(o, f"voice_plan.objects[{i}]", ids)
        for i, o in enumerate(_array(raw["objects"], "voice_plan.objects", min_len=2))
    ]
    if len(set(objects)) != len(objects):
        raise SchemaError("voice_plan.objects", "duplicate object id")
    return VoicePlan(relation, tuple(objects))


# -- detections ------------------------------------------------------------


def validate_detection(raw, width: int, height: int) -> dict:
    """One detection entry: box_2d [x_min, y_min, x_max, y_max] in pixels,
    label of at most 4 words, optional description/crop_ref."""
    _obj(raw, "detection", ("box_2d", "label"), optional=("description", "crop_ref"))
    box = _array(raw["box_2d"], "detection.box_2d", min_len=4, max_len=4)
    coords = [_number(c, f"detection.box_2d[{i}]", -1e9, 1e9) for i, c in enumerate(box)]
    x0, y0, x1, y1 = coords
    if not (x0 < x1 and y0 < y1):
        raise SchemaError("detection.box_2d", f"empty box {coords}")
    if x0 < 0 or y0 < 0 or x1 > width or y1 > height:
        raise SchemaError("detection.box_2d", f"box {coords} outside {width}x{height} frame")
    label = _string(raw["label"], "detection.label")
    if len(label.split()) > 4:
        raise SchemaError("detection.label", f"{label!r} longer than 4 words")
    description = _string(raw.get("description", ""), "detection.description", allow_empty=True)
    crop_ref = raw.get("crop_ref")
    if crop_ref is not None:
        crop_ref = _string(crop_ref, "detection.crop_ref")
    return {
        "box_2d": [float(c) for c in coords],
        "label": label,
        "description": description,
        "crop_ref": crop_ref,
    }


def filter_detections(raw_list, width: int, height: int) -> tuple[list[dict], list[str]]:
    """Validate a detection array, silently dropping bad entries.

    Returns (valid detections, diagnostics for the dropped ones).
    """
    if not isinstance(raw_list, list):
        return [], [f"detections: expected array, got {type(raw_list).__name__}"]
    out, dropped = [], []
    for i, raw in enumerate(raw_list):
        try:
            out.append(validate_detection(raw, width, height))
        except SchemaError as exc:
            dropped.append(f"detections[{i}]: {exc}")
    return out, dropped
