from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from restfuzz.grammar import (
    DefaultNotInDictionary,
    MalformedSpec,
    UnresolvableConsumer,
    parse_spec,
    satisfiable_templates,
    serialize_spec,
)

from conftest import build_spec, groups_paths


class TestParseSpec:
    def test_worked_example_compiles(self, two_template_grammar):
        g = two_template_grammar
        assert set(g.templates) == {"POST /groups", "GET /groups/{id}"}
        get = g.templates["GET /groups/{id}"]
        assert get.param("with_projects").dictionary == ("3", "true", "false")
        assert get.param("with_projects").default == "true"
        assert get.param("id").consumes == "group"
        assert get.param("id").required  # path params are always required
        post = g.templates["POST /groups"]
        assert post.produces == ("group", "/id")

    def test_consumer_without_producer_rejected(self):
        with pytest.raises(UnresolvableConsumer):
            parse_spec(build_spec(groups_paths(with_producer=False)))

    def test_empty_spec_compiles_to_empty_grammar(self):
        g = parse_spec(build_spec({}))
        assert g.templates == {}
        assert g.resource_types == frozenset()
        assert g.dependency_edges == frozenset()

    def test_dependency_edge_derived_from_annotations(self, two_template_grammar):
        assert two_template_grammar.dependency_edges == frozenset(
            {("POST /groups", "group", "GET /groups/{id}")}
        )

    def test_identical_bytes_identical_grammar(self):
        raw = build_spec(groups_paths())
        first, second = parse_spec(raw), parse_spec(raw)
        assert first == second
        assert list(first.templates) == list(second.templates)

    def test_round_trip(self, two_template_grammar):
        assert parse_spec(serialize_spec(two_template_grammar)) == two_template_grammar

    def test_invalid_json_is_malformed(self):
        with pytest.raises(MalformedSpec):
            parse_spec(b"{not json")

    def test_default_outside_dictionary_rejected(self):
        paths = groups_paths()
        params = paths["/groups/{id}"]["GET"]["parameters"]
        params[1]["x-default"] = "maybe"
        with pytest.raises(DefaultNotInDictionary):
            parse_spec(build_spec(paths))

    def test_missing_dictionary_rejected(self):
        paths = groups_paths()
        del paths["/groups/{id}"]["GET"]["parameters"][1]["x-dictionary"]
        with pytest.raises(MalformedSpec):
            parse_spec(build_spec(paths))

    def test_unknown_method_rejected(self):
        with pytest.raises(MalformedSpec):
            parse_spec(build_spec({"/x": {"PATCH": {"parameters": []}}}))

    def test_placeholder_without_path_param_rejected(self):
        paths = {"/t/{id}": {"GET": {"parameters": []}}}
        with pytest.raises(MalformedSpec):
            parse_spec(build_spec(paths))

    def test_mock_target_grammar_ships_and_parses(self):
        from restfuzz.mock_service import packaged_grammar_path

        g = parse_spec(packaged_grammar_path().read_bytes())
        assert len(g.templates) == 12
        assert g.resource_types == frozenset({"group", "project"})


class TestSatisfiableTemplates:
    def test_no_resources_yields_only_independent_templates(self, two_template_grammar):
        assert satisfiable_templates(two_template_grammar, set()) == ["POST /groups"]

    def test_group_available_yields_both(self, two_template_grammar):
        got = satisfiable_templates(two_template_grammar, {"group"})
        assert set(got) == {"POST /groups", "GET /groups/{id}"}
        # stable: repeated calls keep the grammar's template order
        assert got == satisfiable_templates(two_template_grammar, {"group"})
        assert got == [
            t for t in two_template_grammar.template_ids if t in set(got)
        ]

    def test_unrelated_resource_yields_only_producer(self, two_template_grammar):
        assert satisfiable_templates(two_template_grammar, {"project"}) == ["POST /groups"]

    def test_returned_iff_consumes_subset(self, two_template_grammar):
        g = two_template_grammar
        available = frozenset({"group"})
        returned = set(satisfiable_templates(g, available))
        for template_id, template in g.templates.items():
            if template_id in returned:
                assert template.consumed_types <= available
            else:
                assert not template.consumed_types <= available

    @given(
        a=st.frozensets(st.sampled_from(["group", "project", "user"]), max_size=3),
        extra=st.frozensets(st.sampled_from(["group", "project", "user"]), max_size=3),
    )
    @settings(max_examples=50, deadline=None)
    def test_monotonic_in_available_set(self, a, extra):
        g = parse_spec(build_spec(groups_paths()))
        b = a | extra
        assert set(satisfiable_templates(g, a)) <= set(satisfiable_templates(g, b))
