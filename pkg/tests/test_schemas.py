"""Payload validators: well-formed fixtures accepted, mutations rejected."""

import copy
import random

import pytest

from scenelink.graph import RelationType
from scenelink.schemas import (
    SchemaError,
    payload_endpoint_ids,
    validate_detection,
    validate_payload,
    validate_type_selection,
    validate_voice_plan,
)

from schema_fuzz import (
    ALL_KINDS,
    CONTEXT_IDS,
    FRAME_H,
    FRAME_W,
    VALID_FIXTURES,
    mutate,
)

PAYLOAD_KINDS = [t.value for t in RelationType]


def validate(kind: str, raw):
    """Uniform dispatch used by both unit fuzzing and the acceptance gate."""
    if kind == "type_selection":
        return validate_type_selection(raw)
    if kind == "voice_plan":
        return validate_voice_plan(raw, CONTEXT_IDS)
    if kind == "detection":
        return validate_detection(raw, FRAME_W, FRAME_H)
    return validate_payload(RelationType(kind), raw, CONTEXT_IDS)


class TestWellFormed:
    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_fixture_accepted(self, kind):
        out = validate(kind, copy.deepcopy(VALID_FIXTURES[kind]))
        assert out is not None

    def test_comparison_normalizes_to_three_rows(self):
        out = validate("comparison", copy.deepcopy(VALID_FIXTURES["comparison"]))
        assert len(out["attributes"]) == 3

    def test_optional_fields_may_be_absent(self):
        assert validate("affordance", {"tool": "na", "targets": ["nb"], "action": "cut"})[
            "tip"
        ] == ""
        sel = validate("type_selection", {"type": "spatial", "confidence": 0.4})
        assert sel.alternate is None and sel.reason == ""
        det = validate("detection", {"box_2d": [0, 0, 10, 10], "label": "pen"})
        assert det["description"] == "" and det["crop_ref"] is None

    def test_compatible_pair_may_have_empty_warning(self):
        out = validate("compatibility", {"incompatible": False, "warning": ""})
        assert out == {"incompatible": False, "warning": ""}

    def test_type_selection_parses_alternate(self):
        sel = validate_type_selection(copy.deepcopy(VALID_FIXTURES["type_selection"]))
        assert sel.chosen is RelationType.COMPARISON
        assert sel.alternate is RelationType.COMPATIBILITY
        assert sel.alternate_confidence == 0.7

    def test_integer_confidence_accepted_as_number(self):
        sel = validate_type_selection({"type": "spatial", "confidence": 1})
        assert sel.confidence == 1.0


class TestEndpointExtraction:
    def test_directional_payloads_list_source_first(self):
        fix = VALID_FIXTURES
        assert payload_endpoint_ids(
            RelationType.STRUCTURAL, validate("structural", copy.deepcopy(fix["structural"]))
        ) == ["na", "nb", "nc"]
        assert payload_endpoint_ids(
            RelationType.AFFORDANCE, validate("affordance", copy.deepcopy(fix["affordance"]))
        ) == ["na", "nb"]
        assert payload_endpoint_ids(
            RelationType.CAUSALITY, validate("causality", copy.deepcopy(fix["causality"]))
        ) == ["na", "nb"]
        assert payload_endpoint_ids(
            RelationType.SPATIAL, validate("spatial", copy.deepcopy(fix["spatial"]))
        ) == ["na", "nb"]

    def test_symmetric_payloads_have_no_embedded_ids(self):
        for kind in ("comparison", "similarity", "compatibility", "procedural"):
            out = validate(kind, copy.deepcopy(VALID_FIXTURES[kind]))
            assert payload_endpoint_ids(RelationType(kind), out) == []


class TestRejections:
    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_fuzzed_mutations_all_rejected(self, kind):
        rng = random.Random(hash(kind) & 0xFFFF)
        for i in range(200):
            bad = mutate(kind, rng)
            with pytest.raises(SchemaError):
                validate(kind, bad)
                pytest.fail(f"{kind} mutation {i} accepted: {bad!r}")

    def test_error_messages_carry_a_field_path(self):
        with pytest.raises(SchemaError, match=r"comparison\.attributes"):
            validate("comparison", {"attributes": []})
        with pytest.raises(SchemaError, match=r"structural\.children\[1\]"):
            validate(
                "structural", {"parent": "na", "children": ["nb", "zz"], "steps": ["x"]}
            )
        with pytest.raises(SchemaError, match=r"type_selection\.confidence"):
            validate("type_selection", {"type": "spatial", "confidence": 3})

    def test_unknown_relation_type_rejected(self):
        with pytest.raises(SchemaError, match="8 relation types"):
            validate_type_selection({"type": "frenemy", "confidence": 0.5})

    def test_ids_must_resolve_in_context(self):
        raw = {"anchor": "na", "referent": "outsider", "preposition": "on"}
        with pytest.raises(SchemaError, match="does not resolve"):
            validate_payload(RelationType.SPATIAL, raw, CONTEXT_IDS)
        # same payload is fine once the id is in context
        validate_payload(RelationType.SPATIAL, raw, CONTEXT_IDS + ("outsider",))

    def test_bool_fields_reject_coercible_values(self):
        for bad in (1, 0, "true", "false", None):
            with pytest.raises(SchemaError):
                validate("similarity", {"sameType": bad, "theme": "t", "summary": "s"})
