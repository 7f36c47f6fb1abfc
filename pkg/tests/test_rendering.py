from __future__ import annotations

from collections import Counter

import numpy as np
import pytest

from restfuzz.collection import CollectionStore, ParamValuePair
from restfuzz.rendering import (
    ForeignPair,
    MissingProducerId,
    ObjectIdPool,
    ParamValueList,
    RenderMode,
    choose_list,
    extract_producer_ids,
    render_sequence,
    render_traditional,
    render_with_list,
    resolve_consumer,
)
from restfuzz.responses import ResponseRecord

GET_ID = "GET /groups/{id}"
POST = "POST /groups"


@pytest.fixture
def get_template(two_template_grammar):
    return two_template_grammar.templates[GET_ID]


@pytest.fixture
def pool_with_group():
    pool = ObjectIdPool()
    pool.add("group", "7", POST)
    return pool


class TestRenderTraditional:
    def test_values_come_from_dictionaries(self, get_template, pool_with_group, rng):
        step = render_traditional(get_template, pool_with_group, rng)
        assert step.request.path == "/groups/7"
        assert step.request.query["with_projects"] in {"3", "true", "false"}
        assert step.request.query["with_custom_attributes"] in {"true", "false"}
        assert step.request.body == {}

    def test_no_params_renders_empty_request(self, two_template_grammar, rng):
        import dataclasses

        post = two_template_grammar.templates[POST]
        bare = dataclasses.replace(post, params=())
        step = render_traditional(bare, ObjectIdPool(), rng)
        assert step.request.query == {} and step.request.body == {}

    def test_missing_producer_id_raises(self, get_template, rng):
        with pytest.raises(MissingProducerId):
            render_traditional(get_template, ObjectIdPool(), rng)

    def test_replay_is_byte_identical_under_same_seed(self, get_template, pool_with_group):
        first = render_traditional(get_template, pool_with_group, np.random.default_rng(3))
        second = render_traditional(get_template, pool_with_group, np.random.default_rng(3))
        assert first.request == second.request


class TestRenderWithList:
    def test_defaults_plus_overrides(self, get_template, pool_with_group):
        plist = ParamValueList(GET_ID, (ParamValuePair("with_projects", "false"),))
        step = render_with_list(get_template, plist, pool_with_group)
        assert step.request.query == {
            "with_custom_attributes": "false",
            "with_projects": "false",
        }

    def test_empty_list_means_all_defaults(self, get_template, pool_with_group):
        step = render_with_list(get_template, ParamValueList(GET_ID, ()), pool_with_group)
        assert step.request.query == {
            "with_custom_attributes": "false",
            "with_projects": "true",
        }

    def test_full_override_uses_list_values_exactly(self, get_template, pool_with_group):
        plist = ParamValueList(
            GET_ID,
            (
                ParamValuePair("with_custom_attributes", "true"),
                ParamValuePair("with_projects", "3"),
            ),
        )
        step = render_with_list(get_template, plist, pool_with_group)
        assert step.request.query == {
            "with_custom_attributes": "true",
            "with_projects": "3",
        }

    def test_foreign_pair_rejected(self, get_template, pool_with_group):
        plist = ParamValueList(GET_ID, (ParamValuePair("min_access_level", "1"),))
        with pytest.raises(ForeignPair):
            render_with_list(get_template, plist, pool_with_group)

    def test_consumer_override_rejected(self, get_template, pool_with_group):
        plist = ParamValueList(GET_ID, (ParamValuePair("id", "9"),))
        with pytest.raises(ForeignPair):
            render_with_list(get_template, plist, pool_with_group)

    def test_duplicate_param_names_rejected(self):
        with pytest.raises(ValueError):
            ParamValueList(
                GET_ID,
                (
                    ParamValuePair("with_projects", "true"),
                    ParamValuePair("with_projects", "false"),
                ),
            )


class TestChooseList:
    def test_uniform_over_lists(self, rng):
        lists = [ParamValueList(GET_ID, (ParamValuePair("p", str(i)),)) for i in range(4)]
        counts = Counter(choose_list(lists, rng).pairs[0].value for _ in range(100_000))
        for value in counts:
            assert counts[value] / 100_000 == pytest.approx(0.25, abs=0.01)

    def test_single_list_always_chosen(self, rng):
        lists = [ParamValueList(GET_ID, ())]
        assert choose_list(lists, rng) is lists[0]

    def test_no_lists_yields_none(self, rng):
        assert choose_list([], rng) is None


class TestExtractProducerIds:
    def test_pointer_read(self, two_template_grammar):
        post = two_template_grammar.templates[POST]
        assert extract_producer_ids(post, '{"id": 42, "name": "x"}') == [("group", "42")]

    def test_missing_field_is_tolerated(self, two_template_grammar):
        post = two_template_grammar.templates[POST]
        assert extract_producer_ids(post, '{"name": "x"}') == []
        assert extract_producer_ids(post, "not json") == []

    def test_non_producer_yields_nothing(self, two_template_grammar):
        get = two_template_grammar.templates[GET_ID]
        assert extract_producer_ids(get, '{"id": 42}') == []


class TestResolveConsumer:
    def test_most_recent_id_wins(self, two_template_grammar):
        param = two_template_grammar.templates[GET_ID].param("id")
        pool = ObjectIdPool()
        pool.add("group", "7", POST)
        pool.add("group", "9", POST)
        assert resolve_consumer(param, pool) == "9"

    def test_single_id(self, two_template_grammar, pool_with_group):
        param = two_template_grammar.templates[GET_ID].param("id")
        assert resolve_consumer(param, pool_with_group) == "7"

    def test_empty_pool_raises(self, two_template_grammar):
        param = two_template_grammar.templates[GET_ID].param("id")
        with pytest.raises(MissingProducerId):
            resolve_consumer(param, ObjectIdPool())


def drive(generator, responses):
    """Feed canned responses into a render_sequence generator."""
    steps = [next(generator)]
    try:
        for response in responses:
            steps.append(generator.send(response))
    except StopIteration:
        pass
    return steps


class TestRenderSequence:
    def test_single_request_is_traditional_in_every_mode(self, two_template_grammar):
        requests = {}
        for mode in RenderMode:
            gen = render_sequence(
                [POST], two_template_grammar, {}, mode, np.random.default_rng(5),
                CollectionStore(two_template_grammar),
            )
            requests[mode] = next(gen).request
        baseline = requests[RenderMode.BASELINE]
        assert all(req == baseline for req in requests.values())

    def test_miner_uses_lists_before_last_position(self, two_template_grammar, rng):
        post_list = ParamValueList(POST, (ParamValuePair("name", "qa-team"),))
        snapshot = {POST: (post_list,)}
        gen = render_sequence(
            [POST, POST, POST], two_template_grammar, snapshot,
            RenderMode.MINER, rng,
        )
        created = ResponseRecord.from_status(201, '{"id": 1}')
        steps = drive(gen, [created, created, created])
        assert steps[0].request.body == {"name": "qa-team"}
        assert steps[1].request.body == {"name": "qa-team"}
        # the final request ignores lists and draws from the dictionary
        assert steps[2].rendered_params["name"] in {"dev-team", "qa-team"}

    def test_miner_falls_back_to_traditional_without_lists(self, two_template_grammar):
        seed = 11
        gen = render_sequence(
            [POST, POST], two_template_grammar, {}, RenderMode.MINER,
            np.random.default_rng(seed),
        )
        created = ResponseRecord.from_status(201, '{"id": 1}')
        miner_steps = drive(gen, [created, created])
        gen = render_sequence(
            [POST, POST], two_template_grammar, {}, RenderMode.BASELINE,
            np.random.default_rng(seed),
        )
        baseline_steps = drive(gen, [created, created])
        assert [s.request for s in miner_steps] == [s.request for s in baseline_steps]

    def test_rec1_with_empty_store_renders_defaults(self, two_template_grammar, rng):
        store = CollectionStore(two_template_grammar)
        gen = render_sequence(
            [POST, POST], two_template_grammar, {}, RenderMode.REC1, rng, store
        )
        created = ResponseRecord.from_status(201, '{"id": 1}')
        steps = drive(gen, [created, created])
        assert steps[0].request.body == {"name": "dev-team"}  # the default

    def test_rec1_overrides_one_recorded_pair(self, two_template_grammar, rng):
        from restfuzz.responses import ResponseClass

        store = CollectionStore(two_template_grammar)
        store.record_request_outcome(
            POST, {"name": "qa-team"}, {"name": "dev-team"}, ResponseClass.PASS_2XX
        )
        gen = render_sequence(
            [POST, POST], two_template_grammar, {}, RenderMode.REC1, rng, store
        )
        created = ResponseRecord.from_status(201, '{"id": 1}')
        steps = drive(gen, [created, created])
        assert steps[0].request.body == {"name": "qa-team"}

    def test_producer_ids_flow_into_later_positions(self, two_template_grammar, rng):
        gen = render_sequence(
            [POST, GET_ID], two_template_grammar, {}, RenderMode.BASELINE, rng
        )
        steps = drive(gen, [ResponseRecord.from_status(201, '{"id": 42}'),
                            ResponseRecord.from_status(200, "{}")])
        assert steps[1].request.path == "/groups/42"
        assert steps[1].consumer_bindings == {"id": "group"}

    def test_failed_producer_aborts_at_consumer(self, two_template_grammar, rng):
        gen = render_sequence(
            [POST, GET_ID], two_template_grammar, {}, RenderMode.BASELINE, rng
        )
        next(gen)
        with pytest.raises(MissingProducerId):
            gen.send(ResponseRecord.from_status(400, "{}"))
