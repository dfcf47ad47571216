"""Edge store: dedup, confirmation, decay lifecycle, subgraph, user links."""

import random

import pytest

from scenelink.config import EngineConfig
from scenelink.graph import (
    DIRECTIONAL_TYPES,
    EdgeState,
    GraphError,
    Initiative,
    InteractionKind,
    InteractionLinks,
    RelationType,
    SemanticGraph,
)


class FakeNodes:
    def __init__(self, ids):
        self._ids = set(ids)

    def has(self, node_id):
        return node_id in self._ids


def make_graph(ids=("a", "b", "c", "d", "e"), **cfg):
    return SemanticGraph(FakeNodes(ids), EngineConfig(**cfg))


def commit(g, relation=RelationType.COMPARISON, endpoints=("a", "b"), **kw):
    args = dict(
        payload={"k": "v"},
        confidence=0.8,
        initiative=Initiative.SYSTEM_INITIATED,
        state=EdgeState.TENTATIVE,
        now=0.0,
        epoch=0,
    )
    args.update(kw)
    return g.commit_edge(relation, endpoints, **args)


class TestCommit:
    def test_valid_commit_creates_one_edge(self):
        g = make_graph()
        eid = commit(g)
        assert len(g) == 1
        edge = g.get(eid)
        assert edge.relation is RelationType.COMPARISON
        assert edge.endpoints == ("a", "b")
        assert edge.ttl == g.config.tentative_ttl_s

    def test_recommit_same_pair_replaces_payload_not_edge(self):
        g = make_graph()
        first = commit(g, payload={"rows": 1}, now=0.0)
        second = commit(g, payload={"rows": 2}, now=5.0)
        assert first == second
        assert len(g) == 1
        edge = g.get(first)
        assert edge.payload == {"rows": 2}
        assert edge.created_at == 5.0  # refresh restarts the ttl clock

    def test_endpoint_order_is_not_part_of_identity(self):
        g = make_graph()
        first = commit(g, relation=RelationType.COMPATIBILITY, endpoints=("a", "b"))
        second = commit(g, relation=RelationType.COMPATIBILITY, endpoints=("b", "a"))
        assert first == second
        assert g.get(first).endpoints == ("b", "a")  # refreshed direction

    def test_same_pair_different_relation_coexists(self):
        g = make_graph()
        commit(g, relation=RelationType.COMPARISON)
        commit(g, relation=RelationType.COMPATIBILITY)
        assert len(g) == 2

    def test_dead_endpoint_rejected(self):
        g = make_graph()
        with pytest.raises(GraphError, match="not a live node"):
            commit(g, endpoints=("a", "nope"))
        assert len(g) == 0

    @pytest.mark.parametrize("conf", [-0.1, 1.1, 2.0])
    def test_confidence_out_of_bounds_rejected(self, conf):
        g = make_graph()
        with pytest.raises(GraphError, match="confidence"):
            commit(g, confidence=conf)

    def test_too_few_or_repeated_endpoints_rejected(self):
        g = make_graph()
        with pytest.raises(GraphError):
            commit(g, endpoints=("a",))
        with pytest.raises(GraphError):
            commit(g, endpoints=("a", "a"))

    def test_confirmed_never_downgraded_by_recommit(self):
        g = make_graph()
        eid = commit(g, state=EdgeState.CONFIRMED, initiative=Initiative.USER_INITIATED)
        commit(g, state=EdgeState.TENTATIVE, payload={"fresh": True}, confidence=0.5)
        edge = g.get(eid)
        assert edge.state is EdgeState.CONFIRMED
        assert edge.initiative is Initiative.USER_INITIATED
        assert edge.ttl is None
        assert edge.payload == {"fresh": True}  # content still refreshes
        assert edge.confidence == 0.5

    def test_transient_upgrades_to_tentative_and_confirmed(self):
        g = make_graph()
        eid = commit(g, state=EdgeState.TRANSIENT_HELD)
        commit(g, state=EdgeState.TENTATIVE)
        assert g.get(eid).state is EdgeState.TENTATIVE
        commit(g, state=EdgeState.CONFIRMED)
        assert g.get(eid).state is EdgeState.CONFIRMED

    def test_payload_is_copied_not_aliased(self):
        g = make_graph()
        payload = {"rows": [1]}
        eid = commit(g, payload=payload)
        payload["rows"].clear()
        payload["extra"] = True
        assert g.get(eid).payload == {"rows": []} or "extra" not in g.get(eid).payload


class TestConfirmReject:
    def test_confirm_disables_ttl_decay(self):
        g = make_graph(tentative_ttl_s=10.0)
        eid = commit(g, now=0.0)
        g.confirm_edge(eid)
        result = g.decay_tick(now=11.0, current_epoch=0, held_ids=())
        assert result.removed_ids == ()
        assert g.get(eid).state is EdgeState.CONFIRMED

    def test_confirm_is_idempotent(self):
        g = make_graph()
        eid = commit(g)
        g.confirm_edge(eid)
        g.confirm_edge(eid)
        assert g.get(eid).state is EdgeState.CONFIRMED

    def test_confirm_then_reject_removes(self):
        g = make_graph()
        eid = commit(g)
        g.confirm_edge(eid)
        g.remove_edge(eid)
        assert g.get(eid) is None
        assert len(g) == 0

    def test_unknown_ids_raise(self):
        g = make_graph()
        with pytest.raises(GraphError):
            g.confirm_edge("e99")
        with pytest.raises(GraphError):
            g.remove_edge("e99")

    def test_removed_key_is_reusable(self):
        g = make_graph()
        eid = commit(g)
        g.remove_edge(eid)
        new = commit(g)
        assert new != eid
        assert len(g) == 1


class TestDecay:
    def test_ttl_expiry_boundary(self):
        g = make_graph(tentative_ttl_s=10.0)
        eid = commit(g, now=0.0)
        assert g.decay_tick(10.0, 0, ()).removed_ids == ()  # now - created == ttl: keep
        assert g.decay_tick(10.001, 0, ()).removed_ids == (eid,)
        assert len(g) == 0

    def test_confirmed_survives_forever(self):
        g = make_graph()
        eid = commit(g, state=EdgeState.CONFIRMED)
        assert g.decay_tick(1e6, 10_000, ()).removed_ids == ()
        assert g.get(eid) is not None

    def test_epoch_grace_window(self):
        g = make_graph(epoch_grace=1, tentative_ttl_s=1e9)
        eid = commit(g, epoch=5)
        assert g.decay_tick(0.0, 6, ()).removed_ids == ()  # within grace
        assert g.decay_tick(0.0, 7, ()).removed_ids == (eid,)

    def test_transient_held_lives_while_any_endpoint_held(self):
        g = make_graph()
        eid = commit(g, state=EdgeState.TRANSIENT_HELD, endpoints=("a", "b"))
        assert g.decay_tick(0.0, 0, ("a",)).removed_ids == ()
        assert g.decay_tick(0.0, 0, ("b",)).removed_ids == ()
        assert g.decay_tick(0.0, 0, ()).removed_ids == (eid,)

    def test_decay_against_brute_force_predicate(self):
        rng = random.Random(11)
        node_ids = [f"n{i}" for i in range(10)]
        for trial in range(25):
            g = SemanticGraph(FakeNodes(node_ids), EngineConfig(epoch_grace=1))
            for _ in range(100):
                a, b = rng.sample(node_ids, 2)
                state = rng.choice(list(EdgeState))
                commit(
                    g,
                    relation=rng.choice(list(RelationType)),
                    endpoints=(a, b),
                    state=state,
                    now=rng.uniform(0, 50),
                    epoch=rng.randint(0, 5),
                    ttl=rng.uniform(1, 20) if state is EdgeState.TENTATIVE else None,
                )
            now = rng.uniform(0, 80)
            epoch = rng.randint(0, 8)
            held = set(rng.sample(node_ids, rng.randint(0, 3)))
            before = g.edges_snapshot()
            expected = set()
            for e in before:
                if e.state is EdgeState.TENTATIVE:
                    if now - e.created_at > e.ttl or e.context_epoch < epoch - 1:
                        expected.add(e.id)
                elif e.state is EdgeState.TRANSIENT_HELD:
                    if not (set(e.endpoints) & held):
                        expected.add(e.id)
            got = g.decay_tick(now, epoch, held)
            assert set(got.removed_ids) == expected, f"trial {trial}"
            assert len(g) == len(before) - len(expected)

    def test_decay_predicate_is_monotone_in_time(self):
        # an edge due for removal at t stays due at any t' > t (held/epoch fixed)
        rng = random.Random(13)
        for _ in range(50):
            created = rng.uniform(0, 20)
            ttl = rng.uniform(1, 10)
            t1 = rng.uniform(0, 40)
            t2 = t1 + rng.uniform(0, 10)
            if t1 - created > ttl:
                assert t2 - created > ttl


class TestSubgraph:
    def test_empty_and_full_sets(self):
        g = make_graph()
        commit(g, endpoints=("a", "b"))
        commit(g, relation=RelationType.SPATIAL, endpoints=("b", "c"))
        assert g.subgraph([]) == []
        assert len(g.subgraph(["a", "b", "c"])) == 2

    def test_partial_set_matches_brute_force_filter(self):
        rng = random.Random(5)
        node_ids = [f"n{i}" for i in range(8)]
        g = SemanticGraph(FakeNodes(node_ids), EngineConfig())
        for _ in range(60):
            a, b = rng.sample(node_ids, 2)
            commit(g, relation=rng.choice(list(RelationType)), endpoints=(a, b))
        all_edges = g.edges_snapshot()
        for _ in range(30):
            subset = set(rng.sample(node_ids, rng.randint(0, 8)))
            want = {e.id for e in all_edges if subset.issuperset(e.endpoints)}
            got = {e.id for e in g.subgraph(subset)}
            assert got == want

    def test_at_most_one_edge_per_relation_and_pair(self):
        rng = random.Random(17)
        node_ids = [f"n{i}" for i in range(5)]
        g = SemanticGraph(FakeNodes(node_ids), EngineConfig())
        for _ in range(300):
            a, b = rng.sample(node_ids, 2)
            commit(
                g,
                relation=rng.choice(list(RelationType)),
                endpoints=(a, b),
                state=rng.choice(list(EdgeState)),
                ttl=5.0,
            )
        keys = {(e.relation, e.endpoint_set) for e in g.edges_snapshot()}
        assert len(keys) == len(g)

    def test_directional_types_are_the_expected_four(self):
        assert DIRECTIONAL_TYPES == {
            RelationType.AFFORDANCE,
            RelationType.COMPATIBILITY,
            RelationType.PROCEDURAL,
            RelationType.CAUSALITY,
        }


class TestInteractionLinks:
    def test_holding_is_unique_and_keeps_first_timestamp(self):
        links = InteractionLinks()
        links.set_holding("n1", 1.0)
        links.set_holding("n1", 2.0)
        snap = links.snapshot()
        assert len(snap) == 1
        assert snap[0].kind is InteractionKind.HOLDING
        assert snap[0].since == 1.0

    def test_pointing_replaces_previous_target(self):
        links = InteractionLinks()
        links.set_pointing("n1", 1.0)
        links.set_pointing("n2", 2.0)
        snap = [l for l in links.snapshot() if l.kind is InteractionKind.POINTING]
        assert [(l.node_id, l.since) for l in snap] == [("n2", 2.0)]
        links.set_pointing(None, 3.0)
        assert not [l for l in links.snapshot() if l.kind is InteractionKind.POINTING]

    def test_proximate_sync_adds_and_removes(self):
        links = InteractionLinks()
        links.sync_proximate({"n1", "n2"}, 1.0)
        links.sync_proximate({"n2", "n3"}, 2.0)
        snap = {l.node_id: l.since for l in links.snapshot()}
        assert snap == {"n2": 1.0, "n3": 2.0}  # n2's timestamp survives the resync

    def test_drop_node_clears_all_links(self):
        links = InteractionLinks()
        links.set_holding("n1", 1.0)
        links.set_pointing("n1", 1.0)
        links.sync_proximate({"n1"}, 1.0)
        links.drop_node("n1")
        assert links.snapshot() == []

    def test_snapshot_sorted_by_kind_then_id(self):
        links = InteractionLinks()
        links.sync_proximate({"n2", "n1"}, 0.0)
        links.set_holding("n9", 0.0)
        kinds = [(l.kind.value, l.node_id) for l in links.snapshot()]
        assert kinds == sorted(kinds)
