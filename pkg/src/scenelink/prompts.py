"""Prompt template loading and rendering for the HTTP reasoner adapter.

Templates live as plain-text data files under `prompts/` with `{name}`
placeholders; rendering is plain `str.format`.
"""

from __future__ import annotations

from functools import lru_cache
from importlib import resources

TEMPLATE_NAMES = (
    "detect",
    "classify",
    "plan_voice",
    "comparison",
    "similarity",
    "structural",
    "affordance",
    "compatibility",
    "procedural",
    "causality",
)


@lru_cache(maxsize=None)
def template(name: str) -> str:
    if name not in TEMPLATE_NAMES:
        raise KeyError(f"unknown prompt template {name!r}")
    path = resources.files(__package__) / "prompts" / f"{name}.txt"
    return path.read_text(encoding="utf-8").strip()


def describe_objects(objects: list[dict]) -> str:
    """Render context objects as one compact line per node."""
    lines = []
    for obj in objects:
        x, y, z = obj["position"]
        lines.append(f"{obj['id']}: {obj['label']} at ({x:.2f}, {y:.2f}, {z:.2f})")
    return "; ".join(lines)


def render(name: str, *, objects: list[dict] | None = None, utterance: str | None = None) -> str:
    """Expand a template with the parts of the context it needs."""
    kwargs: dict[str, str] = {}
    objects = objects or []
    if "{objects}" in template(name):
        kwargs["objects"] = describe_objects(objects)
    if "{object_a}" in template(name):
        if len(objects) < 2:
            raise ValueError(f"template {name!r} needs two objects, got {len(objects)}")
        kwargs["object_a"] = objects[0]["label"]
        kwargs["object_b"] = objects[1]["label"]
    if "{utterance}" in template(name):
        kwargs["utterance"] = utterance or ""
    return template(name).format(**kwargs)
