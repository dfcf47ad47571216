"""Typed, attributed edge store with lifecycle decay.

Edges connect registered nodes, carry one of eight relation types plus a
schema-validated payload, and are ephemeral by default: tentative edges
expire by TTL or when the context moves on; transient edges live only
while an endpoint is held; confirmed edges persist until rejected.

Deduplication is by (relation, endpoint set): re-committing refreshes the
existing edge instead of duplicating it, and never downgrades a confirmed
edge back to an ephemeral state.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

from .config import EngineConfig


class RelationType(str, Enum):
    SPATIAL = "spatial"
    STRUCTURAL = "structural"
    SIMILARITY = "similarity"
    COMPARISON = "comparison"
    AFFORDANCE = "affordance"
    COMPATIBILITY = "compatibility"
    PROCEDURAL = "procedural"
    CAUSALITY = "causality"


#: Relation types whose endpoint order is meaningful (source -> target).
DIRECTIONAL_TYPES = frozenset(
    {
        RelationType.AFFORDANCE,
        RelationType.COMPATIBILITY,
        RelationType.PROCEDURAL,
        RelationType.CAUSALITY,
    }
)


class Initiative(str, Enum):
    USER_INITIATED = "user_initiated"
    SYSTEM_INITIATED = "system_initiated"
    HYBRID = "hybrid"


class EdgeState(str, Enum):
    TENTATIVE = "tentative"
    CONFIRMED = "confirmed"
    TRANSIENT_HELD = "transient_held"


# precedence for dedup merges: an edge never moves down this ladder
_STATE_RANK = {EdgeState.TRANSIENT_HELD: 0, EdgeState.TENTATIVE: 1, EdgeState.CONFIRMED: 2}


class GraphError(ValueError):
    """Commit or lookup violates graph integrity rules."""


@dataclass
class TypedEdge:
    """One relation between nodes. Order of `endpoints` matters only for
    directional types (tool→targets, cause→effects, ...)."""

    id: str
    relation: RelationType
    endpoints: tuple[str, ...]
    confidence: float
    initiative: Initiative
    state: EdgeState
    payload: dict
    created_at: float
    context_epoch: int
    ttl: float | None = None  # seconds; set only while tentative

    @property
    def endpoint_set(self) -> frozenset[str]:
        return frozenset(self.endpoints)

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "relation": self.relation.value,
            "endpoints": list(self.endpoints),
            "confidence": self.confidence,
            "initiative": self.initiative.value,
            "state": self.state.value,
            "payload": self.payload,
            "created_at": self.created_at,
            "context_epoch": self.context_epoch,
            "ttl": self.ttl,
        }


class InteractionKind(str, Enum):
    HOLDING = "holding"
    POINTING = "pointing"
    PROXIMATE = "proximate"


@dataclass(frozen=True)
class InteractionEdge:
    """User→node embodiment link; deliberately outside the relation taxonomy."""

    kind: InteractionKind
    node_id: str
    since: float

    def to_json(self) -> dict:
        return {"kind": self.kind.value, "node_id": self.node_id, "since": self.since}


class InteractionLinks:
    """The user's current holding/pointing/proximate links, timestamped."""

    def __init__(self):
        self._links: dict[tuple[InteractionKind, str], float] = {}

    def set_holding(self, node_id: str, now: float) -> None:
        self._links.setdefault((InteractionKind.HOLDING, node_id), now)

    def clear_holding(self, node_id: str) -> None:
        self._links.pop((InteractionKind.HOLDING, node_id), None)

    def set_pointing(self, node_id: str | None, now: float) -> None:
        for key in [k for k in self._links if k[0] is InteractionKind.POINTING]:
            if key[1] != node_id:
                del self._links[key]
        if node_id is not None:
            self._links.setdefault((InteractionKind.POINTING, node_id), now)

    def sync_proximate(self, node_ids: set[str], now: float) -> None:
        for key in [k for k in self._links if k[0] is InteractionKind.PROXIMATE]:
            if key[1] not in node_ids:
                del self._links[key]
        for nid in node_ids:
            self._links.setdefault((InteractionKind.PROXIMATE, nid), now)

    def drop_node(self, node_id: str) -> None:
        for key in [k for k in self._links if k[1] == node_id]:
            del self._links[key]

    def snapshot(self) -> list[InteractionEdge]:
        return sorted(
            (InteractionEdge(kind, nid, since) for (kind, nid), since in self._links.items()),
            key=lambda l: (l.kind.value, l.node_id),
        )


@dataclass(frozen=True)
class DecayResult:
    removed_ids: tuple[str, ...]


class SemanticGraph:
    """In-memory edge store. `node_lookup` answers liveness (`has(id)`);
    all mutations happen on the owning session loop."""

    def __init__(self, node_lookup, config: EngineConfig | None = None):
        self.config = config or EngineConfig()
        self._nodes = node_lookup
        self._edges: dict[str, TypedEdge] = {}
        self._by_key: dict[tuple[RelationType, frozenset[str]], str] = {}
        self._counter = 0

    # -- queries ---------------------------------------------------------

    def get(self, edge_id: str) -> TypedEdge | None:
        return self._edges.get(edge_id)

    def find(self, relation: RelationType, endpoints) -> TypedEdge | None:
        """The unique edge for a (relation, endpoint set), if present."""
        eid = self._by_key.get((relation, frozenset(endpoints)))
        return self._edges.get(eid) if eid else None

    def edges_snapshot(self) -> list[TypedEdge]:
        return [replace(e, payload=dict(e.payload)) for e in self._edges.values()]

    def subgraph(self, node_ids) -> list[TypedEdge]:
        """Edges whose endpoints all lie inside `node_ids`."""
        ids = set(node_ids)
        return [
            replace(e, payload=dict(e.payload))
            for e in self._edges.values()
            if ids.issuperset(e.endpoints)
        ]

    def __len__(self) -> int:
        return len(self._edges)

    # -- mutations -------------------------------------------------------

    def commit_edge(
        self,
        relation: RelationType,
        endpoints,
        payload: dict,
        confidence: float,
        initiative: Initiative,
        state: EdgeState,
        now: float,
        epoch: int,
        ttl: float | None = None,
    ) -> str:
        """Insert or refresh the edge for (relation, endpoint set)."""
        endpoints = tuple(endpoints)
        if len(endpoints) < 2:
            raise GraphError(f"edge needs at least 2 endpoints, got {endpoints!r}")
        if len(set(endpoints)) != len(endpoints):
            raise GraphError(f"repeated endpoint in {endpoints!r}")
        for ep in endpoints:
            if not self._nodes.has(ep):
                raise GraphError(f"endpoint {ep!r} is not a live node")
        if not 0.0 <= confidence <= 1.0:
            raise GraphError(f"confidence {confidence} outside [0, 1]")
        if state is EdgeState.TENTATIVE:
            ttl = self.config.tentative_ttl_s if ttl is None else ttl
            if ttl <= 0:
                raise GraphError(f"tentative edge needs positive ttl, got {ttl}")
        else:
            ttl = None

        key = (relation, frozenset(endpoints))
        existing_id = self._by_key.get(key)
        if existing_id is not None:
            edge = self._edges[existing_id]
            edge.payload = dict(payload)
            edge.confidence = confidence
            edge.context_epoch = epoch
            if _STATE_RANK[state] >= _STATE_RANK[edge.state]:
                edge.endpoints = endpoints
                edge.state = state
                edge.initiative = initiative
                edge.created_at = now
                edge.ttl = ttl
            return edge.id

        self._counter += 1
        edge_id = f"e{self._counter}"
        self._edges[edge_id] = TypedEdge(
            id=edge_id,
            relation=relation,
            endpoints=endpoints,
            confidence=confidence,
            initiative=initiative,
            state=state,
            payload=dict(payload),
            created_at=now,
            context_epoch=epoch,
            ttl=ttl,
        )
        self._by_key[key] = edge_id
        return edge_id

    def confirm_edge(self, edge_id: str, initiative: Initiative | None = None) -> None:
        """Promote to confirmed (idempotent); confirmation disables decay."""
        edge = self._edges.get(edge_id)
        if edge is None:
            raise GraphError(f"unknown edge {edge_id!r}")
        edge.state = EdgeState.CONFIRMED
        edge.ttl = None
        if initiative is not None:
            edge.initiative = initiative

    def remove_edge(self, edge_id: str) -> None:
        edge = self._edges.pop(edge_id, None)
        if edge is None:
            raise GraphError(f"unknown edge {edge_id!r}")
        del self._by_key[(edge.relation, edge.endpoint_set)]

    def decay_tick(self, now: float, current_epoch: int, held_ids) -> DecayResult:
        """Apply the lifecycle rules; returns ids removed (sorted).

        tentative:       gone when ttl elapsed or its epoch fell more than
                         `epoch_grace` behind the current one
        transient_held:  gone once no endpoint is held
        confirmed:       untouched, always
        """
        held = set(held_ids)
        removed = []
        for edge in self._edges.values():
            if edge.state is EdgeState.TENTATIVE:
                expired = now - edge.created_at > edge.ttl
                stale = edge.context_epoch < current_epoch - self.config.epoch_grace
                if expired or stale:
                    removed.append(edge.id)
            elif edge.state is EdgeState.TRANSIENT_HELD:
                if not any(ep in held for ep in edge.endpoints):
                    removed.append(edge.id)
        for edge_id in removed:
            edge = self._edges.pop(edge_id)
            del self._by_key[(edge.relation, edge.endpoint_set)]
        return DecayResult(tuple(sorted(removed)))
