"""Turn request templates into ready-to-send requests.

Two rendering strategies: the traditional one draws a random dictionary
value for every parameter; the recommender-backed one starts from defaults
and overrides only the parameters named in a generated param-value list.
Consumer parameters are always resolved from the object-id pool built up
while the sequence executes.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Generator, Mapping, Sequence

import numpy as np

from .collection import CollectionStore, ParamValuePair
from .grammar import CompiledGrammar, ParamSpec, RequestTemplate
from .responses import ResponseClass, ResponseRecord


class RenderError(Exception):
    pass


class MissingProducerId(RenderError):
    """A consumer parameter found no id of its resource type in the pool."""


class ForeignPair(RenderError):
    """A param-value list names a parameter the template does not define."""


class RenderMode(enum.Enum):
    BASELINE = "baseline"
    REC1 = "rec1"
    RECLIST = "reclist"
    MODEL_ONLY = "model-only"
    MINER = "miner"


_MODEL_MODES = (RenderMode.MODEL_ONLY, RenderMode.MINER)


@dataclass(frozen=True)
class ParamValueList:
    """An ordered list of pair overrides for one request template."""

    template_id: str
    pairs: tuple[ParamValuePair, ...]

    def __post_init__(self):
        names = [pair.param_name for pair in self.pairs]
        if len(names) != len(set(names)):
            raise ValueError(f"duplicate parameter names in list for {self.template_id}")

    def validate_against(self, template: RequestTemplate) -> None:
        for pair in self.pairs:
            spec = next((s for s in template.params if s.name == pair.param_name), None)
            if spec is None or spec.is_consumer:
                raise ForeignPair(
                    f"{self.template_id}: {pair.param_name!r} is not a "
                    "defined non-consumer parameter"
                )


@dataclass(frozen=True)
class ReadyRequest:
    """A complete request: resolved path, string-valued params, headers."""

    method: str
    path: str
    query: dict[str, str] = field(default_factory=dict)
    body: dict[str, str] = field(default_factory=dict)
    headers: dict[str, str] = field(default_factory=dict)


class ObjectIdPool:
    """Object ids captured from producer responses; lives for one sequence."""

    def __init__(self):
        self._ids: dict[str, list[tuple[str, str]]] = {}

    def add(self, resource_type: str, value: str, producer_id: str) -> None:
        self._ids.setdefault(resource_type, []).append((value, producer_id))

    def latest(self, resource_type: str) -> str | None:
        entries = self._ids.get(resource_type)
        return entries[-1][0] if entries else None

    def types(self) -> frozenset[str]:
        return frozenset(self._ids)

    def clear(self) -> None:
        self._ids.clear()


def resolve_consumer(param: ParamSpec, pool: ObjectIdPool) -> str:
    """Most recently produced id of the required type (create-then-act)."""
    value = pool.latest(param.consumes)
    if value is None:
        raise MissingProducerId(
            f"no {param.consumes!r} id available for parameter {param.name!r}"
        )
    return value


def _assemble(template: RequestTemplate, values: Mapping[str, str]) -> ReadyRequest:
    path = template.path
    query: dict[str, str] = {}
    body: dict[str, str] = {}
    for spec in template.params:
        value = values[spec.name]
        if spec.location == "path":
            path = path.replace("{" + spec.name + "}", value)
        elif spec.location == "query":
            query[spec.name] = value
        else:
            body[spec.name] = value
    return ReadyRequest(template.method, path, query, body, {})


@dataclass(frozen=True)
class RenderedStep:
    """A rendered request plus the bookkeeping the fuzz loop needs."""

    template_id: str
    request: ReadyRequest
    rendered_params: dict[str, str]      # every parameter, template order
    defaults: dict[str, str]             # non-consumer defaults, template order
    consumer_bindings: dict[str, str]    # param name -> resource type


def _render(
    template: RequestTemplate,
    pool: ObjectIdPool,
    choose_value,
) -> RenderedStep:
    values: dict[str, str] = {}
    bindings: dict[str, str] = {}
    for spec in template.params:
        if spec.is_consumer:
            values[spec.name] = resolve_consumer(spec, pool)
            bindings[spec.name] = spec.consumes
        else:
            values[spec.name] = choose_value(spec)
    return RenderedStep(
        template.template_id,
        _assemble(template, values),
        values,
        template.defaults(),
        bindings,
    )


def render_traditional(
    template: RequestTemplate, pool: ObjectIdPool, rng: np.random.Generator
) -> RenderedStep:
    """Uniform random dictionary value for every non-consumer parameter."""
    return _render(
        template,
        pool,
        lambda spec: spec.dictionary[int(rng.integers(len(spec.dictionary)))],
    )


def render_with_list(
    template: RequestTemplate, plist: ParamValueList, pool: ObjectIdPool
) -> RenderedStep:
    """Defaults everywhere, overridden by the pairs in ``plist``."""
    if plist.template_id != template.template_id:
        raise ForeignPair(
            f"list for {plist.template_id!r} applied to {template.template_id!r}"
        )
    plist.validate_against(template)
    overrides = {pair.param_name: pair.value for pair in plist.pairs}
    return _render(template, pool, lambda spec: overrides.get(spec.name, spec.default))


def choose_list(
    lists: Sequence[ParamValueList], rng: np.random.Generator
) -> ParamValueList | None:
    """Uniform draw over available lists; ``None`` when there are none."""
    if not lists:
        return None
    return lists[int(rng.integers(len(lists)))]


def extract_producer_ids(template: RequestTemplate, body: str) -> list[tuple[str, str]]:
    """Read the produced object id from a 2xx response body.

    Tolerant: a missing field or unparsable body yields no ids rather than
    an error.
    """
    if not template.produces:
        return []
    resource_type, pointer = template.produces
    try:
        doc = json.loads(body) if body else None
    except json.JSONDecodeError:
        return []
    node = doc
    for key in pointer.lstrip("/").split("/"):
        if not isinstance(node, dict) or key not in node:
            return []
        node = node[key]
    if isinstance(node, (str, int)):
        return [(resource_type, str(node))]
    return []


def render_sequence(
    candidate_ids: Sequence[str],
    grammar: CompiledGrammar,
    list_snapshot: Mapping[str, Sequence[ParamValueList]],
    mode: RenderMode,
    rng: np.random.Generator,
    store: CollectionStore | None = None,
) -> Generator[RenderedStep, ResponseRecord, None]:
    """Render a candidate one request at a time, fed by response feedback.

    A generator: it yields each :class:`RenderedStep` and must be sent the
    resulting :class:`ResponseRecord` before it renders the next position.
    Producer ids from 2xx responses flow into the pool between positions.

    The last position is always rendered traditionally; positions before it
    follow ``mode``: model modes use a chosen param-value list (falling back
    to traditional when none exists yet), rec1/reclist replay one recorded
    pair / one recorded pair list on top of defaults, baseline stays fully
    random.
    """
    pool = ObjectIdPool()
    last = len(candidate_ids) - 1
    for position, template_id in enumerate(candidate_ids):
        template = grammar.templates[template_id]
        if position == last or mode is RenderMode.BASELINE:
            step = render_traditional(template, pool, rng)
        elif mode in _MODEL_MODES:
            plist = choose_list(list_snapshot.get(template_id, ()), rng)
            if plist is None:
                step = render_traditional(template, pool, rng)
            else:
                step = render_with_list(template, plist, pool)
        elif mode is RenderMode.REC1:
            pairs = store.recorded_pairs_for(template_id) if store else []
            chosen = (
                (pairs[int(rng.integers(len(pairs)))],) if pairs else ()
            )
            step = render_with_list(
                template, ParamValueList(template_id, chosen), pool
            )
        elif mode is RenderMode.RECLIST:
            lists = store.recorded_lists_for(template_id) if store else []
            chosen_list = (
                lists[int(rng.integers(len(lists)))] if lists else ()
            )
            step = render_with_list(
                template, ParamValueList(template_id, tuple(chosen_list)), pool
            )
        else:  # pragma: no cover - exhaustive over RenderMode
            raise ValueError(f"unknown render mode {mode}")

        response = yield step
        if response is None:
            raise RuntimeError("render_sequence must be sent the response record")
        if response.klass is ResponseClass.PASS_2XX and template.produces:
            for resource_type, value in extract_producer_ids(template, response.body):
                pool.add(resource_type, value, template_id)
