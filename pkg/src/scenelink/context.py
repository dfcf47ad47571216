"""The active reasoning context: a weighted node set anchored to the user.

A node enters the window by being selected, held, mentioned in the last
utterance, inside the proximity band, or recently manipulated; its weight
is the max of the applicable terms. The epoch counts membership or
selection-order changes and fences stale reasoner responses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .config import EngineConfig
from .geometry import within_band
from .registry import USER_NODE_ID, ObjectNode, UserNode

SOURCE_SELECTED = "selected"
SOURCE_HELD = "held"
SOURCE_MENTIONED = "mentioned"
SOURCE_PROXIMATE = "proximate"
SOURCE_RECENT = "recent"


@dataclass(frozen=True)
class ContextEntry:
    node_id: str
    weight: float
    sources: frozenset[str]

    def to_json(self) -> dict:
        return {"node_id": self.node_id, "weight": self.weight, "sources": sorted(self.sources)}


@dataclass(frozen=True)
class ContextWindow:
    epoch: int
    entries: tuple[ContextEntry, ...]
    selection_order: tuple[str, ...]

    def ids(self) -> list[str]:
        return [e.node_id for e in self.entries]

    def object_ids(self) -> list[str]:
        return [e.node_id for e in self.entries if e.node_id != USER_NODE_ID]

    def has(self, node_id: str) -> bool:
        return any(e.node_id == node_id for e in self.entries)

    def to_json(self) -> dict:
        return {
            "epoch": self.epoch,
            "entries": [e.to_json() for e in self.entries],
            "selection_order": list(self.selection_order),
        }


def node_weight(
    node: ObjectNode,
    user: UserNode,
    selected: frozenset[str],
    held: frozenset[str],
    mentioned: frozenset[str],
    now: float,
    config: EngineConfig,
) -> tuple[float, frozenset[str]]:
    """Max over the applicable weight terms, plus which terms applied."""
    weight = 0.0
    sources = set()
    if node.id in selected:
        weight = max(weight, config.weight_selected)
        sources.add(SOURCE_SELECTED)
    if node.id in held:
        weight = max(weight, config.weight_held)
        sources.add(SOURCE_HELD)
    if node.id in mentioned:
        weight = max(weight, config.weight_mentioned)
        sources.add(SOURCE_MENTIONED)
    if within_band(user.pose, node.position, config.band_radius_m):
        weight = max(weight, config.weight_proximate)
        sources.add(SOURCE_PROXIMATE)
    if node.last_manipulated is not None:
        dt = now - node.last_manipulated
        if 0.0 <= dt <= config.recency_window_s:
            weight = max(
                weight, config.weight_recent_base * math.exp(-dt / config.recency_window_s)
            )
            sources.add(SOURCE_RECENT)
    return weight, frozenset(sources)


def compute_entries(
    nodes: list[ObjectNode],
    user: UserNode,
    selection_order,
    held_ids,
    mentioned_ids,
    now: float,
    config: EngineConfig,
) -> tuple[ContextEntry, ...]:
    """Pure evaluation of the window membership and weights (epoch-free)."""
    selected = frozenset(selection_order)
    held = frozenset(held_ids)
    mentioned = frozenset(mentioned_ids)
    entries = [ContextEntry(USER_NODE_ID, 1.0, frozenset())]
    for node in nodes:
        weight, sources = node_weight(node, user, selected, held, mentioned, now, config)
        if weight >= config.weight_cutoff:
            entries.append(ContextEntry(node.id, weight, sources))
    entries.sort(key=lambda e: (-e.weight, e.node_id))
    return tuple(entries)


class ContextTracker:
    """Owns the current window; bumps the epoch only when membership or
    selection order actually change, so weight drift alone never fences
    an in-flight request."""

    def __init__(self, config: EngineConfig | None = None):
        self.config = config or EngineConfig()
        self._window = ContextWindow(
            epoch=0,
            entries=(ContextEntry(USER_NODE_ID, 1.0, frozenset()),),
            selection_order=(),
        )

    @property
    def window(self) -> ContextWindow:
        return self._window

    def epoch_of(self) -> int:
        return self._window.epoch

    def recompute(
        self,
        nodes: list[ObjectNode],
        user: UserNode,
        selection_order,
        held_ids,
        mentioned_ids,
        now: float,
    ) -> tuple[ContextWindow, bool]:
        entries = compute_entries(
            nodes, user, selection_order, held_ids, mentioned_ids, now, self.config
        )
        order = tuple(selection_order)
        old = self._window
        changed = {e.node_id for e in entries} != {e.node_id for e in old.entries} or (
            order != old.selection_order
        )
        self._window = ContextWindow(
            epoch=old.epoch + 1 if changed else old.epoch,
            entries=entries,
            selection_order=order,
        )
        return self._window, changed
