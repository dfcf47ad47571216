"""Staged relation inference: route → extract → validate → commit.

A proposal moves through stages, each backed by one reasoner request with
bounded retries (1 initial + 2). Responses are schema-validated and
epoch-fenced: anything stale, malformed, or past its retry budget drops
the proposal without touching the graph. When the router cannot pick a
single type (top-2 confidence gap below the margin), the proposal parks
as a disambiguation offer until the user resolves, rejects, or it expires.

Reasoner calls go through an executor: SerialExecutor runs them inline
(deterministic, used by replay), PoolExecutor runs them on worker threads
with a wall-clock deadline per call and a hard in-flight bound.
"""

from __future__ import annotations

import logging
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .config import EngineConfig
from .context import ContextTracker
from .graph import EdgeState, GraphError, Initiative, RelationType, SemanticGraph
from .reasoner import (
    KIND_CLASSIFY,
    KIND_EXTRACT,
    KIND_PLAN_VOICE,
    Reasoner,
    ReasonerRequest,
    ReasonerTimeout,
)
from .schemas import (
    SchemaError,
    TypeSelection,
    payload_endpoint_ids,
    validate_payload,
    validate_type_selection,
    validate_voice_plan,
)

log = logging.getLogger(__name__)

#: types inferred pairwise when more than two endpoints are in play;
#: the first endpoint anchors each pair
PAIRWISE_TYPES = frozenset(
    {RelationType.COMPARISON, RelationType.COMPATIBILITY, RelationType.SPATIAL}
)

FLOW_SELECTION = "selection"
FLOW_HELD_PAIR = "held_pair"
FLOW_VOICE = "voice"

#: how each flow commits: (initiative, edge state)
_FLOW_COMMIT = {
    FLOW_SELECTION: (Initiative.SYSTEM_INITIATED, EdgeState.TENTATIVE),
    FLOW_HELD_PAIR: (Initiative.USER_INITIATED, EdgeState.TRANSIENT_HELD),
    FLOW_VOICE: (Initiative.USER_INITIATED, EdgeState.CONFIRMED),
}

_LEAD_PHRASES = {
    RelationType.COMPARISON: "Compare these two {noun}",
    RelationType.COMPATIBILITY: "Check if these two {noun} work together",
    RelationType.SIMILARITY: "Group these two {noun} by similarity",
    RelationType.STRUCTURAL: "Show how these two {noun} fit together",
    RelationType.PROCEDURAL: "Show steps for these two {noun}",
    RelationType.CAUSALITY: "Show what these two {noun} cause",
    RelationType.AFFORDANCE: "Show how these two {noun} are used",
    RelationType.SPATIAL: "Show where these two {noun} sit",
}

_ALT_PHRASES = {
    RelationType.COMPARISON: "show comparison",
    RelationType.COMPATIBILITY: "show compatibility",
    RelationType.SIMILARITY: "show similarity",
    RelationType.STRUCTURAL: "show assembly",
    RelationType.PROCEDURAL: "show steps",
    RelationType.CAUSALITY: "show effects",
    RelationType.AFFORDANCE: "show uses",
    RelationType.SPATIAL: "show arrangement",
}


def disambiguation_prompt(candidates, labels) -> str:
    """E.g. two charger labels + {comparison, compatibility} →
    'Compare these two chargers, or show compatibility?'"""
    words = [l.strip().lower().split()[-1] for l in labels if l.strip()]
    if len(labels) == 2 and len(set(words)) == 1:
        noun = words[0] + ("es" if words[0].endswith(("s", "x", "ch", "sh")) else "s")
    else:
        noun = "items"
    lead = _LEAD_PHRASES[candidates[0]].format(noun=noun)
    alts = ", or ".join(_ALT_PHRASES[c] for c in candidates[1:])
    return f"{lead}, or {alts}?"


# -- executors ---------------------------------------------------------------


class SerialExecutor:
    """Runs calls inline at submit time; drain hands back queued results in
    submission order. No timeouts, no threads — fully deterministic."""

    def __init__(self):
        self._done: deque = deque()

    def submit(self, call_id: str, fn) -> None:
        try:
            result = fn()
        except Exception as exc:  # failure is a value at this boundary
            self._done.append((call_id, exc))
        else:
            self._done.append((call_id, result))

    def drain(self) -> list[tuple[str, object]]:
        out = list(self._done)
        self._done.clear()
        return out

    def active_count(self) -> int:
        return 0

    def shutdown(self) -> None:
        pass


class PoolExecutor:
    """Thread-pool execution with a wall-clock deadline per call.

    A call past its deadline is reported as ReasonerTimeout and abandoned;
    if the worker eventually returns, the result is discarded. Physical
    concurrency never exceeds `max_workers`.
    """

    def __init__(self, max_workers: int, call_timeout_s: float):
        self.call_timeout_s = call_timeout_s
        self._pool = ThreadPoolExecutor(max_workers=max_workers)
        self._calls: dict[str, tuple] = {}

    def submit(self, call_id: str, fn) -> None:
        self._calls[call_id] = (self._pool.submit(fn), time.monotonic())

    def drain(self) -> list[tuple[str, object]]:
        out = []
        now = time.monotonic()
        for call_id, (future, submitted) in list(self._calls.items()):
            if future.done():
                del self._calls[call_id]
                exc = future.exception()
                out.append((call_id, exc if exc is not None else future.result()))
            elif now - submitted > self.call_timeout_s:
                del self._calls[call_id]
                future.cancel()
                out.append(
                    (call_id, ReasonerTimeout(f"no response within {self.call_timeout_s}s"))
                )
        return out

    def active_count(self) -> int:
        return len(self._calls)

    def shutdown(self) -> None:
        self._pool.shutdown(wait=False, cancel_futures=True)


# -- proposals ---------------------------------------------------------------


@dataclass
class PipelineNote:
    """One user-visible or test-visible pipeline outcome."""

    kind: str  # needs_disambiguation | clarification | committed | dropped | expired
    proposal_id: str | None = None
    text: str = ""
    candidates: tuple[str, ...] = ()
    edge_ids: tuple[str, ...] = ()
    reason: str = ""

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "proposal_id": self.proposal_id,
            "text": self.text,
            "candidates": list(self.candidates),
            "edge_ids": list(self.edge_ids),
            "reason": self.reason,
        }


@dataclass
class RelationProposal:
    id: str
    flow: str
    target_ids: tuple[str, ...]
    context: dict
    context_epoch: int
    created_at: float
    utterance: str | None = None
    disposition: str = "pending"  # pending | needs_disambiguation | committed | dropped
    selection: TypeSelection | None = None
    candidates: tuple[RelationType, ...] = ()
    prompt_text: str = ""
    offered_at: float = 0.0
    pending_extracts: list = field(default_factory=list)  # [(relation, endpoint ids)]
    collected: list = field(default_factory=list)  # [(relation, endpoints, payload)]
    edge_ids: tuple[str, ...] = ()
    attempts: dict = field(default_factory=dict)  # stage key -> tries so far
    initiative: Initiative = Initiative.SYSTEM_INITIATED
    edge_state: EdgeState = EdgeState.TENTATIVE

    def offer_json(self) -> dict:
        return {
            "id": self.id,
            "candidates": [c.value for c in self.candidates],
            "prompt": self.prompt_text,
            "endpoints": list(self.target_ids),
            "offered_at": self.offered_at,
        }


@dataclass(frozen=True)
class _Call:
    call_id: str
    proposal_id: str
    stage: str  # "classify" | "plan" | "extract:<relation>:<i>"
    request: ReasonerRequest


class InferencePipeline:
    def __init__(
        self,
        graph: SemanticGraph,
        tracker: ContextTracker,
        reasoner: Reasoner,
        executor,
        config: EngineConfig | None = None,
        objects_provider=None,
    ):
        """`objects_provider(ids)` serializes live nodes as
        [{id, label, position}, ...] for reasoner context, preserving the
        requested order and skipping unknown ids."""
        self.graph = graph
        self.tracker = tracker
        self.reasoner = reasoner
        self.executor = executor
        self.config = config or EngineConfig()
        self._objects_provider = objects_provider
        self._proposals: dict[str, RelationProposal] = {}
        self._active: dict[str, _Call] = {}
        self._ready: deque[_Call] = deque()
        self._proposal_counter = 0
        self._call_counter = 0

    # -- public queries ----------------------------------------------------

    def proposal(self, proposal_id: str) -> RelationProposal | None:
        return self._proposals.get(proposal_id)

    def open_offers(self) -> list[RelationProposal]:
        return [
            p for p in self._proposals.values() if p.disposition == "needs_disambiguation"
        ]

    def offers_state(self) -> dict:
        return {p.id: p.offer_json() for p in self.open_offers()}

    def inflight(self) -> int:
        return self.executor.active_count() + len(self._ready)

    def idle(self) -> bool:
        return not self._ready and self.executor.active_count() == 0

    # -- flow entry points ---------------------------------------------------

    def propose_for_selection(self, target_ids, now: float) -> RelationProposal:
        """Selection settled on ≥ 2 nodes: route through the classifier."""
        proposal = self._new_proposal(FLOW_SELECTION, target_ids, now)
        self._enqueue(proposal, "classify", KIND_CLASSIFY)
        return proposal

    def propose_for_held_pair(self, pair, now: float) -> RelationProposal:
        """Two objects in hand: comparison wins outright, no router call."""
        proposal = self._new_proposal(FLOW_HELD_PAIR, pair, now)
        proposal.selection = TypeSelection(
            chosen=RelationType.COMPARISON,
            confidence=self.config.held_pair_confidence,
            reason="both objects are in hand",
        )
        self._queue_extracts(proposal)
        return proposal

    def propose_for_voice(self, utterance: str, mentioned_ids, now: float) -> RelationProposal:
        proposal = self._new_proposal(FLOW_VOICE, mentioned_ids, now, utterance=utterance)
        self._enqueue(proposal, "plan", KIND_PLAN_VOICE)
        return proposal

    def resolve_disambiguation(
        self, proposal_id: str, chosen: str, now: float
    ) -> list[PipelineNote]:
        proposal = self._proposals.get(proposal_id)
        if proposal is None or proposal.disposition != "needs_disambiguation":
            return [PipelineNote("clarification", proposal_id, text="Nothing to resolve.")]
        try:
            relation = RelationType(chosen)
        except ValueError:
            relation = None
        if relation is None or relation not in proposal.candidates:
            offered = ", ".join(c.value for c in proposal.candidates)
            return [
                PipelineNote(
                    "clarification",
                    proposal_id,
                    text=f"Choose one of: {offered}.",
                )
            ]
        proposal.disposition = "pending"
        proposal.selection = TypeSelection(relation, 1.0, "user resolved the choice")
        proposal.initiative = Initiative.HYBRID
        proposal.edge_state = EdgeState.CONFIRMED
        proposal.context_epoch = self.tracker.epoch_of()  # re-fence from resolve time
        proposal.created_at = now
        self._queue_extracts(proposal)
        return []

    def reject_proposal(self, proposal_id: str) -> bool:
        proposal = self._proposals.get(proposal_id)
        if proposal is None or proposal.disposition != "needs_disambiguation":
            return False
        proposal.disposition = "dropped"
        return True

    # -- the pump ------------------------------------------------------------

    def pump(self, now: float) -> list[PipelineNote]:
        """Advance everything that can advance; returns outcome notes."""
        notes: list[PipelineNote] = []
        self._expire_offers(now, notes)
        while True:
            self._issue_ready()
            batch = self.executor.drain()
            if not batch:
                break
            for call_id, result in batch:
                self._on_call_result(call_id, result, now, notes)
        return notes

    def shutdown(self) -> None:
        self._ready.clear()
        self._active.clear()
        self.executor.shutdown()
        self.reasoner.close()

    # -- internals -------------------------------------------------------------

    def _new_proposal(self, flow, target_ids, now, utterance=None) -> RelationProposal:
        self._proposal_counter += 1
        initiative, edge_state = _FLOW_COMMIT[flow]
        window = self.tracker.window
        objects = self._context_objects(target_ids)
        proposal = RelationProposal(
            id=f"r{self._proposal_counter}",
            flow=flow,
            target_ids=tuple(target_ids),
            context={
                "objects": objects,
                "target_ids": list(target_ids),
                "selection_order": list(window.selection_order),
                "utterance": utterance,
                "epoch": window.epoch,
            },
            context_epoch=window.epoch,
            created_at=now,
            utterance=utterance,
            initiative=initiative,
            edge_state=edge_state,
        )
        self._proposals[proposal.id] = proposal
        return proposal

    def _context_objects(self, target_ids) -> list[dict]:
        """Window objects plus the action's explicit targets: a request must
        be able to ground its own endpoints even when one (say, the node a
        held object is aimed at) has not entered the window."""
        if self._objects_provider is None:
            return []
        ids = list(self.tracker.window.object_ids())
        ids.extend(t for t in target_ids if t not in ids)
        return self._objects_provider(ids)

    def _enqueue(self, proposal: RelationProposal, stage: str, kind: str, relation=None):
        self._call_counter += 1
        context = dict(proposal.context)
        if stage.startswith("extract:"):
            _, _, rest = stage.partition(":")
            pair_index = int(rest.rsplit(":", 1)[1])
            context["target_ids"] = list(proposal.pending_extracts[pair_index][1])
        request = ReasonerRequest(
            kind=kind,
            request_id=f"{proposal.id}.{stage}.{self._call_counter}",
            context_epoch=proposal.context_epoch,
            context=context,
            relation=relation,
        )
        self._ready.append(_Call(f"c{self._call_counter}", proposal.id, stage, request))

    def _issue_ready(self) -> None:
        while self._ready and self.executor.active_count() < self.config.max_inflight:
            call = self._ready.popleft()
            proposal = self._proposals.get(call.proposal_id)
            if proposal is None or proposal.disposition in ("dropped", "committed"):
                continue
            self._active[call.call_id] = call
            self.executor.submit(call.call_id, lambda c=call: self.reasoner.complete(c.request))

    def _on_call_result(self, call_id: str, result, now: float, notes) -> None:
        call = self._active.pop(call_id, None)
        if call is None:
            return  # abandoned/timed-out call that completed late
        proposal = self._proposals.get(call.proposal_id)
        if proposal is None or proposal.disposition in ("dropped", "committed"):
            return
        if proposal.context_epoch != self.tracker.epoch_of():
            self._drop(proposal, "stale context epoch", notes)
            return
        if isinstance(result, Exception):
            self._stage_failed(call, proposal, f"reasoner failure: {result}", now, notes)
            return
        try:
            self._apply_stage(call, proposal, result, now, notes)
        except SchemaError as exc:
            if call.stage == "plan" and "does not resolve" in str(exc):
                # a voice request naming unknown objects is a user-facing
                # problem, not a transient fault: ask instead of retrying
                self._drop(proposal, str(exc), notes, silent=True)
                notes.append(
                    PipelineNote(
                        "clarification",
                        proposal.id,
                        text="I couldn't match those objects in the scene.",
                    )
                )
                return
            self._stage_failed(call, proposal, str(exc), now, notes)

    def _stage_failed(self, call: _Call, proposal: RelationProposal, reason, now, notes) -> None:
        tries = proposal.attempts.get(call.stage, 0) + 1
        proposal.attempts[call.stage] = tries
        if tries <= self.config.max_retries:
            log.debug("retrying %s %s: %s", proposal.id, call.stage, reason)
            self._resubmit(proposal, call)
            return
        if call.stage.startswith("extract:"):
            # omit just this pair; sibling extracts may still commit
            log.debug("omitting %s %s: %s", proposal.id, call.stage, reason)
            index = int(call.stage.rsplit(":", 1)[1])
            proposal.pending_extracts[index] = None
            if all(e is None for e in proposal.pending_extracts):
                self._commit(proposal, now, notes)
            return
        self._drop(proposal, f"{call.stage}: {reason} (after {tries} attempts)", notes)

    def _resubmit(self, proposal: RelationProposal, call: _Call) -> None:
        self._call_counter += 1
        request = ReasonerRequest(
            kind=call.request.kind,
            request_id=f"{proposal.id}.{call.stage}.{self._call_counter}",
            context_epoch=call.request.context_epoch,
            context=call.request.context,
            relation=call.request.relation,
        )
        self._ready.append(_Call(f"c{self._call_counter}", proposal.id, call.stage, request))

    def _apply_stage(self, call: _Call, proposal: RelationProposal, raw, now, notes) -> None:
        if call.stage == "classify":
            selection = validate_type_selection(raw)
            gap_is_narrow = (
                selection.alternate is not None
                and selection.confidence - selection.alternate_confidence
                < self.config.ambiguity_margin
            )
            if gap_is_narrow:
                self._offer_disambiguation(proposal, selection, now, notes)
                return
            proposal.selection = selection
            self._queue_extracts(proposal)
            return
        if call.stage == "plan":
            plan = validate_voice_plan(raw, self._context_ids(proposal))
            proposal.selection = TypeSelection(plan.relation, 1.0, "voice request")
            proposal.target_ids = plan.endpoint_ids
            proposal.context["target_ids"] = list(plan.endpoint_ids)
            self._queue_extracts(proposal)
            return
        if call.stage.startswith("extract:"):
            relation = call.request.relation
            payload = validate_payload(relation, raw, self._context_ids(proposal))
            endpoints = tuple(payload_endpoint_ids(relation, payload)) or tuple(
                call.request.context["target_ids"]
            )
            proposal.collected.append((relation, endpoints, payload))
            index = int(call.stage.rsplit(":", 1)[1])
            proposal.pending_extracts[index] = None
            if all(e is None for e in proposal.pending_extracts):
                self._commit(proposal, now, notes)
            return
        raise AssertionError(f"unknown stage {call.stage!r}")

    def _offer_disambiguation(self, proposal, selection: TypeSelection, now, notes) -> None:
        candidates = (selection.chosen, selection.alternate)
        labels = [o["label"] for o in proposal.context["objects"] if o["id"] in proposal.target_ids]
        proposal.disposition = "needs_disambiguation"
        proposal.candidates = candidates
        proposal.prompt_text = disambiguation_prompt(candidates, labels)
        proposal.offered_at = now
        notes.append(
            PipelineNote(
                "needs_disambiguation",
                proposal.id,
                text=proposal.prompt_text,
                candidates=tuple(c.value for c in candidates),
            )
        )

    def _queue_extracts(self, proposal: RelationProposal) -> None:
        relation = proposal.selection.chosen
        targets = list(proposal.target_ids)
        if relation in PAIRWISE_TYPES and len(targets) > 2:
            pairs = [(targets[0], other) for other in targets[1:]]
        else:
            pairs = [tuple(targets)]
        proposal.pending_extracts = [(relation, pair) for pair in pairs]
        for i in range(len(proposal.pending_extracts)):
            self._enqueue(proposal, f"extract:{relation.value}:{i}", KIND_EXTRACT, relation)

    def _commit(self, proposal: RelationProposal, now: float, notes) -> None:
        if proposal.context_epoch != self.tracker.epoch_of():
            self._drop(proposal, "stale context epoch at commit", notes)
            return
        edge_ids = []
        diagnostics = []
        for relation, endpoints, payload in proposal.collected:
            try:
                edge_ids.append(
                    self.graph.commit_edge(
                        relation,
                        endpoints,
                        payload,
                        confidence=proposal.selection.confidence,
                        initiative=proposal.initiative,
                        state=proposal.edge_state,
                        now=now,
                        epoch=proposal.context_epoch,
                    )
                )
            except GraphError as exc:
                diagnostics.append(str(exc))
        if not edge_ids:
            self._drop(proposal, "; ".join(diagnostics) or "nothing to commit", notes)
            return
        proposal.disposition = "committed"
        proposal.edge_ids = tuple(edge_ids)
        notes.append(PipelineNote("committed", proposal.id, edge_ids=tuple(edge_ids)))

    def _drop(self, proposal: RelationProposal, reason: str, notes, silent=False) -> None:
        proposal.disposition = "dropped"
        log.debug("dropped %s: %s", proposal.id, reason)
        if not silent:
            notes.append(PipelineNote("dropped", proposal.id, reason=reason))

    def _expire_offers(self, now: float, notes) -> None:
        for proposal in self.open_offers():
            if now - proposal.offered_at > self.config.proposal_ttl_s:
                proposal.disposition = "dropped"
                notes.append(PipelineNote("expired", proposal.id))

    def _context_ids(self, proposal: RelationProposal) -> frozenset[str]:
        return frozenset(o["id"] for o in proposal.context["objects"])
