"""Snapshot state as plain JSON and the delta algebra over it.

A session's observable state is one JSON object: nodes, user, interaction
links, edges, open proposals, selection order, and the context epoch.
``diff`` turns two states into a compact delta; ``fold`` applies a delta.
The governing identity — ``fold(old, diff(old, new)) == new`` — is what
lets clients reconstruct any snapshot from the delta stream alone.

Keyed collections (nodes, edges, proposals) diff per id into
added/updated/removed; the rest (user, links, selection order, epoch) are
small and replaced wholesale when changed, signalled by null when not.
"""

from __future__ import annotations

import copy
from typing import Any

#: state sections diffed per id
_KEYED = ("nodes", "edges", "proposals")
#: state sections replaced wholesale; None in a delta means "unchanged"
_REPLACED = ("user", "links", "selection_order", "epoch")


def empty_state() -> dict:
    """The observable state of a session before any event."""
    return {
        "nodes": {},
        "user": None,
        "links": [],
        "edges": {},
        "proposals": {},
        "selection_order": [],
        "epoch": 0,
    }


def diff(old: dict, new: dict) -> dict:
    """Delta taking ``old`` to ``new``; apply with :func:`fold`."""
    delta: dict[str, Any] = {}
    for section in _KEYED:
        olds, news = old[section], new[section]
        added = {k: news[k] for k in news if k not in olds}
        updated = {k: news[k] for k in news if k in olds and news[k] != olds[k]}
        removed = sorted(k for k in olds if k not in news)
        delta[section] = {"added": added, "updated": updated, "removed": removed}
    for section in _REPLACED:
        delta[section] = new[section] if new[section] != old[section] else None
    return delta


def is_empty(delta: dict) -> bool:
    """True when the delta changes nothing (seq/window attachments aside)."""
    for section in _KEYED:
        part = delta.get(section)
        if part and (part["added"] or part["updated"] or part["removed"]):
            return False
    return all(delta.get(section) is None for section in _REPLACED)


def fold(state: dict, delta: dict) -> dict:
    """Apply one delta; pure — inputs are never mutated."""
    out = copy.deepcopy(state)
    for section in _KEYED:
        part = delta.get(section)
        if not part:
            continue
        table = out[section]
        table.update(copy.deepcopy(part.get("added", {})))
        table.update(copy.deepcopy(part.get("updated", {})))
        for key in part.get("removed", ()):
            table.pop(key, None)
    for section in _REPLACED:
        value = delta.get(section)
        if value is not None:
            out[section] = copy.deepcopy(value)
    return out


def fold_all(state: dict, deltas) -> dict:
    for delta in deltas:
        state = fold(state, delta)
    return state
