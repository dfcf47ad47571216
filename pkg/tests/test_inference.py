"""Pipeline behavior: flows, ambiguity, retries, fencing, in-flight bounds."""

import threading
import time

from scenelink.config import EngineConfig
from scenelink.context import ContextTracker
from scenelink.geometry import Pose
from scenelink.graph import EdgeState, Initiative, RelationType, SemanticGraph
from scenelink.inference import (
    InferencePipeline,
    PoolExecutor,
    SerialExecutor,
    disambiguation_prompt,
)
from scenelink.reasoner import FaultInjectingReasoner, MockReasoner, Reasoner
from scenelink.registry import ObjectNode, UserNode


class Harness:
    """Registry-free pipeline rig: hand-built nodes, real graph/tracker."""

    def __init__(self, kb=None, labels=None, positions=None, config=None, executor=None, reasoner=None):
        self.config = config or EngineConfig()
        labels = labels or {"na": "usb-c charger", "nb": "wireless charger"}
        positions = positions or {}
        self.nodes = [
            ObjectNode(
                id=nid,
                label=label,
                pose=Pose(positions.get(nid, (float(i), 0.0, 0.0))),
                extent=(0.1, 0.1, 0.1),
            )
            for i, (nid, label) in enumerate(labels.items())
        ]
        self.user = UserNode()
        ids = {n.id for n in self.nodes}
        self.lookup = type("Lookup", (), {"has": staticmethod(lambda i: i in ids)})()
        self.graph = SemanticGraph(self.lookup, self.config)
        self.tracker = ContextTracker(self.config)
        self.reasoner = reasoner if reasoner is not None else MockReasoner(kb or {})
        self.pipe = InferencePipeline(
            self.graph,
            self.tracker,
            self.reasoner,
            executor or SerialExecutor(),
            self.config,
            objects_provider=self._objects,
        )

    def _objects(self, ids):
        by_id = {n.id: n for n in self.nodes}
        return [
            {"id": i, "label": by_id[i].label, "position": list(by_id[i].position)}
            for i in ids
            if i in by_id
        ]

    def select(self, ids, now=0.0):
        self.tracker.recompute(self.nodes, self.user, ids, [], [], now)

    def mention(self, ids, now=0.0):
        self.tracker.recompute(self.nodes, self.user, [], [], ids, now)


COMPARISON_PAYLOAD = {
    "attributes": [
        {"name": "price", "value_a": "$9", "value_b": "$29"},
        {"name": "speed", "value_a": "fast", "value_b": "slow"},
        {"name": "cable", "value_a": "required", "value_b": "none"},
    ]
}


class TestSelectionFlow:
    def test_unambiguous_classify_commits_tentative_edge(self):
        kb = {
            "usb-c charger|wireless charger": {
                "type": "comparison",
                "confidence": 0.9,
                "payload": COMPARISON_PAYLOAD,
            }
        }
        h = Harness(kb)
        h.select(["na", "nb"])
        h.pipe.propose_for_selection(("na", "nb"), now=1.0)
        notes = h.pipe.pump(now=1.0)
        assert [n.kind for n in notes] == ["committed"]
        (edge,) = h.graph.edges_snapshot()
        assert edge.relation is RelationType.COMPARISON
        assert edge.state is EdgeState.TENTATIVE
        assert edge.initiative is Initiative.SYSTEM_INITIATED
        assert edge.confidence == 0.9
        assert len(edge.payload["attributes"]) == 3

    def test_unknown_pair_falls_back_to_spatial_edge(self):
        h = Harness({}, positions={"na": (0.0, 1.0, 0.0), "nb": (0.0, 0.0, 0.0)})
        h.select(["na", "nb"])
        h.pipe.propose_for_selection(("na", "nb"), now=0.0)
        h.pipe.pump(now=0.0)
        (edge,) = h.graph.edges_snapshot()
        assert edge.relation is RelationType.SPATIAL
        assert edge.payload["preposition"] == "above"
        assert edge.confidence == 0.3

    def test_extraction_without_knowledge_drops_silently(self):
        kb = {"usb-c charger|wireless charger": {"type": "comparison", "confidence": 0.9}}
        h = Harness(kb)
        h.select(["na", "nb"])
        h.pipe.propose_for_selection(("na", "nb"), now=0.0)
        notes = h.pipe.pump(now=0.0)
        assert [n.kind for n in notes] == ["dropped"]
        assert len(h.graph) == 0


class TestDisambiguation:
    KB = {
        "usb-c charger|wireless charger": {
            "candidates": [
                {"type": "comparison", "confidence": 0.55},
                {"type": "compatibility", "confidence": 0.50},
            ],
            "payloads": {
                "comparison": COMPARISON_PAYLOAD,
                "compatibility": {"incompatible": False, "warning": ""},
            },
        }
    }

    def offer(self, h):
        h.select(["na", "nb"])
        proposal = h.pipe.propose_for_selection(("na", "nb"), now=0.0)
        notes = h.pipe.pump(now=0.0)
        return proposal, notes

    def test_narrow_margin_offers_choice_with_prompt(self):
        h = Harness(self.KB)
        proposal, notes = self.offer(h)
        (note,) = notes
        assert note.kind == "needs_disambiguation"
        assert note.candidates == ("comparison", "compatibility")
        assert note.text == "Compare these two chargers, or show compatibility?"
        assert len(h.graph) == 0
        assert h.pipe.offers_state()[proposal.id]["prompt"] == note.text

    def test_resolve_commits_hybrid_confirmed_edge(self):
        h = Harness(self.KB)
        proposal, _ = self.offer(h)
        errors = h.pipe.resolve_disambiguation(proposal.id, "compatibility", now=2.0)
        assert errors == []
        notes = h.pipe.pump(now=2.0)
        assert [n.kind for n in notes] == ["committed"]
        (edge,) = h.graph.edges_snapshot()
        assert edge.relation is RelationType.COMPATIBILITY
        assert edge.initiative is Initiative.HYBRID
        assert edge.state is EdgeState.CONFIRMED

    def test_resolve_with_unoffered_type_is_rejected(self):
        h = Harness(self.KB)
        proposal, _ = self.offer(h)
        notes = h.pipe.resolve_disambiguation(proposal.id, "causality", now=2.0)
        assert [n.kind for n in notes] == ["clarification"]
        assert proposal.disposition == "needs_disambiguation"
        assert len(h.graph) == 0

    def test_reject_closes_the_offer(self):
        h = Harness(self.KB)
        proposal, _ = self.offer(h)
        assert h.pipe.reject_proposal(proposal.id)
        assert h.pipe.offers_state() == {}
        assert not h.pipe.reject_proposal(proposal.id)  # second reject is a no-op

    def test_offer_expires_after_ttl(self):
        h = Harness(self.KB, config=EngineConfig(proposal_ttl_s=5.0))
        proposal, _ = self.offer(h)
        notes = h.pipe.pump(now=5.5)
        assert [n.kind for n in notes] == ["expired"]
        assert proposal.disposition == "dropped"

    def test_equal_confidences_are_ambiguous(self):
        kb = {
            "usb-c charger|wireless charger": {
                "candidates": [
                    {"type": "comparison", "confidence": 0.5},
                    {"type": "compatibility", "confidence": 0.5},
                ]
            }
        }
        h = Harness(kb)
        _, notes = self.offer(h)
        assert notes[0].kind == "needs_disambiguation"


class TestHeldPairFlow:
    def test_skips_classifier_and_commits_transient(self):
        calls = []

        class Spy(MockReasoner):
            def complete(self, request):
                calls.append(request.kind)
                return super().complete(request)

        kb = {
            "usb-c charger|wireless charger": {
                "type": "comparison",
                "confidence": 0.9,
                "payload": COMPARISON_PAYLOAD,
            }
        }
        h = Harness(reasoner=Spy(kb))
        h.select(["na", "nb"])
        h.pipe.propose_for_held_pair(("na", "nb"), now=0.0)
        h.pipe.pump(now=0.0)
        assert calls == ["extract"]  # no classify round-trip
        (edge,) = h.graph.edges_snapshot()
        assert edge.relation is RelationType.COMPARISON
        assert edge.state is EdgeState.TRANSIENT_HELD
        assert edge.initiative is Initiative.USER_INITIATED
        assert edge.confidence == h.config.held_pair_confidence


class TestVoiceFlow:
    def test_compare_keyword_commits_confirmed_comparison(self):
        kb = {
            "usb-c charger|wireless charger": {
                "type": "comparison",
                "confidence": 0.9,
                "payload": COMPARISON_PAYLOAD,
            }
        }
        h = Harness(kb)
        h.mention(["na", "nb"])
        h.pipe.propose_for_voice("compare these two", ("na", "nb"), now=0.0)
        h.pipe.pump(now=0.0)
        (edge,) = h.graph.edges_snapshot()
        assert edge.relation is RelationType.COMPARISON
        assert edge.state is EdgeState.CONFIRMED
        assert edge.initiative is Initiative.USER_INITIATED

    def test_multi_target_compatibility_fans_out_pairwise(self):
        labels = {"np": "phone", "nt": "smart tv", "ns": "speaker", "nl": "led bulb"}
        kb = {
            "phone|smart tv": {
                "payloads": {"compatibility": {"incompatible": False, "warning": ""}}
            },
            "phone|speaker": {
                "payloads": {"compatibility": {"incompatible": False, "warning": ""}}
            },
            "led bulb|phone": {
                "payloads": {
                    "compatibility": {
                        "incompatible": True,
                        "warning": "The bulb needs a hub; it will not pair directly.",
                    }
                }
            },
        }
        h = Harness(kb, labels=labels)
        h.mention(["np", "nt", "ns", "nl"])
        h.pipe.propose_for_voice(
            "connect the phone to each of these devices", ("np", "nt", "ns", "nl"), now=0.0
        )
        notes = h.pipe.pump(now=0.0)
        assert [n.kind for n in notes] == ["committed"]
        edges = h.graph.edges_snapshot()
        assert len(edges) == 3
        assert all(e.relation is RelationType.COMPATIBILITY for e in edges)
        assert all(e.endpoints[0] == "np" for e in edges)  # anchor is first mentioned
        warnings = {e.endpoints[1]: e.payload["incompatible"] for e in edges}
        assert warnings == {"nt": False, "ns": False, "nl": True}

    def test_unresolvable_plan_surfaces_clarification(self):
        kb = {"_plans": {"frobnicate the zork": {"type": "spatial", "objects": ["zork", "gish"]}}}
        h = Harness(kb)
        h.mention(["na"])
        h.pipe.propose_for_voice("frobnicate the zork", ("na",), now=0.0)
        notes = h.pipe.pump(now=0.0)
        assert [n.kind for n in notes] == ["clarification"]
        assert len(h.graph) == 0


class TestRetries:
    KB = {
        "usb-c charger|wireless charger": {
            "type": "comparison",
            "confidence": 0.9,
            "payload": COMPARISON_PAYLOAD,
        }
    }

    def test_two_garbles_then_success_commits(self):
        inner = MockReasoner(self.KB)
        faulty = FaultInjectingReasoner(
            inner, lambda i, _r: "garble" if i < 2 else "ok"
        )
        h = Harness(reasoner=faulty)
        h.select(["na", "nb"])
        h.pipe.propose_for_held_pair(("na", "nb"), now=0.0)
        notes = h.pipe.pump(now=0.0)
        assert [n.kind for n in notes] == ["committed"]
        assert len(faulty.calls) == 3  # initial + 2 retries
        assert len(h.graph) == 1

    def test_three_failures_drop_with_no_graph_mutation(self):
        faulty = FaultInjectingReasoner(MockReasoner(self.KB), lambda i, _r: "garble")
        h = Harness(reasoner=faulty)
        h.select(["na", "nb"])
        h.pipe.propose_for_held_pair(("na", "nb"), now=0.0)
        notes = h.pipe.pump(now=0.0)
        assert [n.kind for n in notes] == ["dropped"]
        assert len(faulty.calls) == 3  # retry budget exhausted, then stop
        assert len(h.graph) == 0

    def test_drops_count_like_garbles(self):
        faulty = FaultInjectingReasoner(MockReasoner(self.KB), lambda i, _r: "drop")
        h = Harness(reasoner=faulty)
        h.select(["na", "nb"])
        h.pipe.propose_for_held_pair(("na", "nb"), now=0.0)
        notes = h.pipe.pump(now=0.0)
        assert [n.kind for n in notes] == ["dropped"]
        assert len(faulty.calls) == 3

    def test_partial_fanout_commits_surviving_pairs(self):
        labels = {"np": "phone", "nt": "tv", "ns": "speaker"}
        kb = {
            "phone|tv": {"payloads": {"compatibility": {"incompatible": False, "warning": ""}}},
            # no entry for phone|speaker: that extract can never validate
        }
        h = Harness(kb, labels=labels)
        h.mention(["np", "nt", "ns"])
        h.pipe.propose_for_voice("connect the phone to these", ("np", "nt", "ns"), now=0.0)
        notes = h.pipe.pump(now=0.0)
        assert [n.kind for n in notes] == ["committed"]
        edges = h.graph.edges_snapshot()
        assert [e.endpoints for e in edges] == [("np", "nt")]


class TestEpochFencing:
    def test_stale_response_commits_nothing(self):
        kb = {
            "usb-c charger|wireless charger": {
                "type": "comparison",
                "confidence": 0.9,
                "payload": COMPARISON_PAYLOAD,
            }
        }
        h = Harness(kb)
        h.select(["na", "nb"])
        h.pipe.propose_for_selection(("na", "nb"), now=0.0)
        # the context moves on before the response is applied
        h.select(["na"], now=1.0)
        notes = h.pipe.pump(now=1.0)
        assert [n.kind for n in notes] == ["dropped"]
        assert len(h.graph) == 0

    def test_resolve_refences_from_resolution_time(self):
        h = Harness(TestDisambiguation.KB)
        h.select(["na", "nb"])
        proposal = h.pipe.propose_for_selection(("na", "nb"), now=0.0)
        h.pipe.pump(now=0.0)
        assert proposal.disposition == "needs_disambiguation"
        # epoch moves while the dialog is open; resolution still works
        h.mention(["na"], now=3.0)
        h.pipe.resolve_disambiguation(proposal.id, "comparison", now=4.0)
        notes = h.pipe.pump(now=4.0)
        assert [n.kind for n in notes] == ["committed"]


class CountingReasoner(Reasoner):
    """Blocks briefly per call; records the high-water concurrency mark."""

    def __init__(self, kb, delay_s=0.02):
        self.inner = MockReasoner(kb)
        self.delay_s = delay_s
        self._lock = threading.Lock()
        self.running = 0
        self.peak = 0

    def complete(self, request):
        with self._lock:
            self.running += 1
            self.peak = max(self.peak, self.running)
        try:
            time.sleep(self.delay_s)
            return self.inner.complete(request)
        finally:
            with self._lock:
                self.running -= 1


class TestPoolExecution:
    KB = {
        "usb-c charger|wireless charger": {
            "type": "comparison",
            "confidence": 0.9,
            "payload": COMPARISON_PAYLOAD,
        }
    }

    def pump_until_idle(self, h, deadline_s=10.0):
        start = time.monotonic()
        notes = []
        while not h.pipe.idle():
            notes.extend(h.pipe.pump(now=0.0))
            assert time.monotonic() - start < deadline_s, "pipeline did not settle"
            time.sleep(0.005)
        notes.extend(h.pipe.pump(now=0.0))
        return notes

    def test_inflight_never_exceeds_bound(self):
        config = EngineConfig(max_inflight=4, reasoner_timeout_s=2.0)
        counting = CountingReasoner(self.KB)
        h = Harness(
            config=config,
            reasoner=counting,
            executor=PoolExecutor(config.max_inflight, config.reasoner_timeout_s),
        )
        h.select(["na", "nb"])
        for _ in range(12):
            h.pipe.propose_for_held_pair(("na", "nb"), now=0.0)
        notes = self.pump_until_idle(h)
        assert counting.peak <= 4
        assert sum(1 for n in notes if n.kind == "committed") == 12
        h.pipe.executor.shutdown()

    def test_slow_calls_time_out_and_resolve_quickly(self):
        config = EngineConfig(max_inflight=4, reasoner_timeout_s=0.1)
        slow = FaultInjectingReasoner(MockReasoner(self.KB), lambda i, _r: ("delay", 5.0))
        h = Harness(
            config=config,
            reasoner=slow,
            executor=PoolExecutor(config.max_inflight, config.reasoner_timeout_s),
        )
        h.select(["na", "nb"])
        h.pipe.propose_for_held_pair(("na", "nb"), now=0.0)
        start = time.monotonic()
        notes = self.pump_until_idle(h)
        elapsed = time.monotonic() - start
        assert [n.kind for n in notes] == ["dropped"]
        assert elapsed < config.reasoner_timeout_s * 3 + 1.0
        assert len(h.graph) == 0
        h.pipe.executor.shutdown()


class TestPromptText:
    def test_mismatched_labels_fall_back_to_items(self):
        text = disambiguation_prompt(
            (RelationType.COMPARISON, RelationType.COMPATIBILITY), ["knife", "charging cable"]
        )
        assert text == "Compare these two items, or show compatibility?"

    def test_plural_of_sibilant_noun(self):
        text = disambiguation_prompt(
            (RelationType.SIMILARITY, RelationType.COMPARISON), ["small box", "large box"]
        )
        assert text.startswith("Group these two boxes by similarity, or ")
