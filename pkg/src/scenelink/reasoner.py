"""The pluggable reasoning boundary.

Three implementations of one interface:

- MockReasoner: deterministic lookups over a knowledge-base dict, plus
  keyword rules for utterances — the test/replay workhorse. Same request,
  same answer, every time.
- HttpReasoner: posts rendered prompt templates to a configurable
  endpoint; the response body must be the raw JSON payload.
- FaultInjectingReasoner: wraps another reasoner and injects drops,
  delays, and garbled bodies on a scripted policy.

All implementations return *raw* parsed JSON; schema validation is the
caller's job (see schemas / inference).
"""

from __future__ import annotations

import itertools
import threading
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import httpx

from .graph import RelationType
from .prompts import render


class ReasonerError(RuntimeError):
    """The reasoner could not produce a response body."""


class ReasonerTimeout(ReasonerError):
    """No response within the adapter deadline."""


class ReasonerUnavailable(ReasonerError):
    """Transport failure / non-JSON / non-2xx response."""


KIND_DETECT = "detect"
KIND_CLASSIFY = "classify"
KIND_EXTRACT = "extract"
KIND_PLAN_VOICE = "plan_voice"


@dataclass(frozen=True)
class ReasonerRequest:
    """One unit of work for the model boundary.

    `context` carries the serialized window: an `objects` list of
    {id, label, position, ...}, `target_ids` naming the endpoint
    candidates, plus `selection_order`, `utterance`, `frame_ref` as
    applicable.
    """

    kind: str
    request_id: str
    context_epoch: int
    context: dict = field(default_factory=dict)
    relation: RelationType | None = None

    def target_objects(self) -> list[dict]:
        by_id = {o["id"]: o for o in self.context.get("objects", [])}
        return [by_id[t] for t in self.context.get("target_ids", []) if t in by_id]


class Reasoner(ABC):
    @abstractmethod
    def complete(self, request: ReasonerRequest):
        """Return the raw JSON-like response for a request (may block)."""

    def close(self) -> None:  # pragma: no cover - default no-op
        pass


# -- deterministic mock ------------------------------------------------------


def kb_key(labels) -> str:
    """Canonical knowledge-base key: sorted, lowercased, '|'-joined labels."""
    return "|".join(sorted(label.strip().lower() for label in labels))


#: utterance keyword → relation type, checked in order; first hit wins
_KEYWORD_RULES: tuple[tuple[tuple[str, ...], RelationType], ...] = (
    (("compare",), RelationType.COMPARISON),
    (("fit", "work with", "safe", "connect", "compatible"), RelationType.COMPATIBILITY),
    (("how do i", "how to", "steps"), RelationType.PROCEDURAL),
    (("what happens if", "what happens when"), RelationType.CAUSALITY),
    (("similar", "same"), RelationType.SIMILARITY),
    (("part of", "assemble", "attach"), RelationType.STRUCTURAL),
    (("where",), RelationType.SPATIAL),
)

_ID_FIELDS = {
    RelationType.STRUCTURAL: (("parent", False), ("children", True)),
    RelationType.AFFORDANCE: (("tool", False), ("targets", True)),
    RelationType.CAUSALITY: (("cause", False), ("effects", True)),
    RelationType.SPATIAL: (("anchor", False), ("referent", False)),
}


class MockReasoner(Reasoner):
    """Knowledge-base lookup standing in for the multimodal model.

    KB format (JSON object):
      - "<label|label|...>" (kb_key of the endpoint labels) →
          {"type": ..., "confidence": ..., "payload": {...}}            one clear answer
        or
          {"candidates": [{"type","confidence"}, ...],
           "payloads": {"<type>": {...}, ...}}                          ambiguous pair
        Payload id-slots may hold *labels*; they are resolved to node
        ids against the request context at answer time.
      - reserved "_"-prefixed keys:
          "_tools", "_ingredients": label lists for the affordance rule
          "_frames": {frame_ref: [detection, ...]} scripted detections
          "_plans": {lowercased utterance: {"type", "objects": [labels]}}
    """

    def __init__(self, kb: dict | None = None):
        self.kb = kb or {}

    # entry points ---------------------------------------------------------

    def complete(self, request: ReasonerRequest):
        if request.kind == KIND_DETECT:
            return self._detect(request)
        if request.kind == KIND_CLASSIFY:
            return self._classify(request)
        if request.kind == KIND_EXTRACT:
            return self._extract(request)
        if request.kind == KIND_PLAN_VOICE:
            return self._plan(request)
        raise ReasonerError(f"unknown request kind {request.kind!r}")

    # per-kind logic --------------------------------------------------------

    def _detect(self, request: ReasonerRequest):
        frames = self.kb.get("_frames", {})
        return frames.get(request.context.get("frame_ref"), [])

    def _entry_for(self, labels) -> dict | None:
        return self.kb.get(kb_key(labels))

    def _classify(self, request: ReasonerRequest):
        targets = request.target_objects()
        entry = self._entry_for(o["label"] for o in targets)
        if entry is None:
            return {
                "type": RelationType.SPATIAL.value,
                "confidence": 0.3,
                "reason": "no knowledge entry; falling back to scene arrangement",
            }
        if "candidates" in entry:
            ranked = sorted(
                entry["candidates"], key=lambda c: (-c["confidence"], c["type"])
            )
            top = ranked[0]
            out = {
                "type": top["type"],
                "confidence": top["confidence"],
                "reason": entry.get("reason", "knowledge entry"),
            }
            if len(ranked) > 1:
                out["alternate"] = {
                    "type": ranked[1]["type"],
                    "confidence": ranked[1]["confidence"],
                }
            return out
        return {
            "type": entry["type"],
            "confidence": entry.get("confidence", 0.9),
            "reason": entry.get("reason", "knowledge entry"),
        }

    def _extract(self, request: ReasonerRequest):
        relation = request.relation
        targets = request.target_objects()
        entry = self._entry_for(o["label"] for o in targets)
        payload = None
        if entry is not None:
            if "payloads" in entry:
                payload = entry["payloads"].get(relation.value)
            elif entry.get("type") == relation.value:
                payload = entry.get("payload")
        if payload is None:
            if relation is RelationType.SPATIAL and len(targets) >= 2:
                return self._spatial_from_geometry(targets[0], targets[1])
            return {"error": f"no knowledge for {relation.value} over these objects"}
        return self._resolve_ids(relation, payload, request)

    def _plan(self, request: ReasonerRequest):
        utterance = (request.context.get("utterance") or "").lower()
        plans = self.kb.get("_plans", {})
        if utterance in plans:
            plan = plans[utterance]
            ids = [self._label_to_id(o, request) for o in plan["objects"]]
            return {"type": plan["type"], "objects": ids}

        target_ids = list(request.context.get("target_ids", []))
        relation = self._relation_from_keywords(utterance, request)
        if relation is RelationType.SPATIAL and len(target_ids) == 1:
            other = self._nearest_other(target_ids[0], request)
            if other is not None:
                target_ids.append(other)
        return {"type": relation.value, "objects": target_ids}

    # helpers ---------------------------------------------------------------

    def _relation_from_keywords(self, utterance: str, request: ReasonerRequest) -> RelationType:
        for needles, relation in _KEYWORD_RULES:
            if any(n in utterance for n in needles):
                return relation
        tools = {t.lower() for t in self.kb.get("_tools", [])}
        ingredients = {t.lower() for t in self.kb.get("_ingredients", [])}
        labels = {o["label"].lower() for o in request.target_objects()}
        if labels & tools and labels & ingredients:
            return RelationType.AFFORDANCE
        entry = self._entry_for(labels)
        if entry is not None and "type" in entry:
            return RelationType(entry["type"])
        return RelationType.SIMILARITY

    def _label_to_id(self, ref: str, request: ReasonerRequest) -> str:
        objects = request.context.get("objects", [])
        for obj in objects:
            if obj["id"] == ref:
                return ref
        needle = ref.strip().lower()
        for obj in objects:
            if obj["label"].strip().lower() == needle:
                return obj["id"]
        return ref  # unresolved: schema validation will flag it

    def _resolve_ids(self, relation: RelationType, payload: dict, request: ReasonerRequest):
        resolved = dict(payload)
        for fld, is_list in _ID_FIELDS.get(relation, ()):
            if fld not in resolved:
                continue
            if is_list:
                if isinstance(resolved[fld], list):
                    resolved[fld] = [self._label_to_id(x, request) for x in resolved[fld]]
            else:
                resolved[fld] = self._label_to_id(resolved[fld], request)
        return resolved

    def _nearest_other(self, node_id: str, request: ReasonerRequest) -> str | None:
        objects = request.context.get("objects", [])
        origin = next((o for o in objects if o["id"] == node_id), None)
        if origin is None:
            return None
        best, best_d = None, float("inf")
        for obj in sorted(objects, key=lambda o: o["id"]):
            if obj["id"] == node_id:
                continue
            d = sum((a - b) ** 2 for a, b in zip(obj["position"], origin["position"]))
            if d < best_d:
                best, best_d = obj["id"], d
        return best

    def _spatial_from_geometry(self, a: dict, b: dict):
        ax, ay, az = a["position"]
        bx, by, bz = b["position"]
        dy = ay - by
        horizontal = ((ax - bx) ** 2 + (az - bz) ** 2) ** 0.5
        if abs(dy) > max(horizontal, 0.05):
            preposition = "above" if dy > 0 else "below"
        elif horizontal <= 0.3:
            preposition = "next-to"
        else:
            preposition = "near"
        return {"anchor": a["id"], "referent": b["id"], "preposition": preposition}


# -- HTTP adapter -------------------------------------------------------------


class HttpReasoner(Reasoner):
    """Posts `{prompt, context}` to an endpoint that answers with the raw
    JSON payload for the request kind."""

    def __init__(self, base_url: str, timeout_s: float = 8.0, transport=None):
        self.base_url = base_url.rstrip("/")
        self.timeout_s = timeout_s
        self._client = httpx.Client(timeout=timeout_s, transport=transport)

    def complete(self, request: ReasonerRequest):
        prompt = self._prompt_for(request)
        try:
            response = self._client.post(
                f"{self.base_url}/complete",
                json={"prompt": prompt, "context": request.context},
            )
        except httpx.TimeoutException as exc:
            raise ReasonerTimeout(str(exc)) from exc
        except httpx.HTTPError as exc:
            raise ReasonerUnavailable(str(exc)) from exc
        if response.status_code != 200:
            raise ReasonerUnavailable(f"endpoint returned {response.status_code}")
        try:
            return response.json()
        except ValueError as exc:
            raise ReasonerUnavailable(f"non-JSON response body: {exc}") from exc

    def _prompt_for(self, request: ReasonerRequest) -> str:
        if request.kind == KIND_EXTRACT:
            name = request.relation.value
        elif request.kind in (KIND_DETECT, KIND_CLASSIFY, KIND_PLAN_VOICE):
            name = request.kind
        else:
            raise ReasonerError(f"unknown request kind {request.kind!r}")
        return render(
            name,
            objects=request.target_objects() or request.context.get("objects", []),
            utterance=request.context.get("utterance"),
        )

    def close(self) -> None:
        self._client.close()


# -- fault injection ----------------------------------------------------------


class FaultInjectingReasoner(Reasoner):
    """Wraps a reasoner with a scripted fault policy.

    `policy(index, request)` returns one of:
      "ok"            pass through
      "garble"        return a body that cannot validate
      "drop"          raise ReasonerUnavailable
      ("delay", s)    sleep s seconds, then pass through
    Indexes count calls in arrival order (thread-safe).
    """

    def __init__(self, inner: Reasoner, policy):
        self.inner = inner
        self.policy = policy
        self._counter = itertools.count()
        self._lock = threading.Lock()
        self.calls: list[str] = []

    def complete(self, request: ReasonerRequest):
        with self._lock:
            index = next(self._counter)
            self.calls.append(request.request_id)
        action = self.policy(index, request)
        if action == "ok":
            return self.inner.complete(request)
        if action == "garble":
            return {"__garbled__": True}
        if action == "drop":
            raise ReasonerUnavailable("injected drop")
        if isinstance(action, tuple) and action[0] == "delay":
            time.sleep(action[1])
            return self.inner.complete(request)
        raise ReasonerError(f"unknown fault action {action!r}")

    def close(self) -> None:
        self.inner.close()
