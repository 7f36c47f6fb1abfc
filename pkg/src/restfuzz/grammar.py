"""Compile a JSON API grammar into request templates and a dependency graph.

The grammar format is a small Swagger-v2 subset with extension fields:
``x-dictionary`` (candidate literal values), ``x-default`` (the value used
when nothing overrides it), ``x-consumes`` (this parameter is filled with a
previously produced object id) and ``x-produces`` (where in a 2xx response
body the created object id lives).  Producer/consumer edges are derived
purely from those annotations.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

METHODS = ("GET", "POST", "PUT", "DELETE")
LOCATIONS = ("path", "query", "body")
VALUE_TYPES = ("string", "integer", "boolean", "datetime")

_PLACEHOLDER_RE = re.compile(r"\{([^{}/]+)\}")


class GrammarError(Exception):
    """Base class for grammar compilation failures."""


class MalformedSpec(GrammarError):
    """The document does not follow the grammar format."""


class UnresolvableConsumer(GrammarError):
    """A parameter consumes a resource type that no template produces."""


class DefaultNotInDictionary(GrammarError):
    """A parameter default is missing from its value dictionary."""


@dataclass(frozen=True)
class ParamSpec:
    """One request parameter with its candidate-value dictionary."""

    name: str
    location: str
    value_type: str
    required: bool
    dictionary: tuple[str, ...]
    default: str | None
    consumes: str | None = None

    @property
    def is_consumer(self) -> bool:
        return self.consumes is not None


@dataclass(frozen=True)
class RequestTemplate:
    """A parameterized request type: method, path skeleton and parameters."""

    template_id: str
    method: str
    path: str
    params: tuple[ParamSpec, ...]
    produces: tuple[str, str] | None = None  # (resource type, response-field pointer)

    def param(self, name: str) -> ParamSpec:
        for spec in self.params:
            if spec.name == name:
                return spec
        raise KeyError(name)

    @property
    def param_names(self) -> frozenset[str]:
        return frozenset(spec.name for spec in self.params)

    @property
    def consumed_types(self) -> frozenset[str]:
        return frozenset(spec.consumes for spec in self.params if spec.consumes)

    def params_at(self, location: str) -> tuple[ParamSpec, ...]:
        return tuple(spec for spec in self.params if spec.location == location)

    def defaults(self) -> dict[str, str]:
        """Default value per non-consumer parameter, in template order."""
        return {
            spec.name: spec.default
            for spec in self.params
            if not spec.is_consumer and spec.default is not None
        }


@dataclass(frozen=True)
class CompiledGrammar:
    """Immutable compilation result, safe to share across threads."""

    templates: dict[str, RequestTemplate]
    resource_types: frozenset[str]
    dependency_edges: frozenset[tuple[str, str, str]]

    @property
    def template_ids(self) -> tuple[str, ...]:
        return tuple(self.templates)

    def producers_of(self, resource_type: str) -> tuple[RequestTemplate, ...]:
        return tuple(
            t for t in self.templates.values()
            if t.produces and t.produces[0] == resource_type
        )

    def consumers_of(self, resource_type: str) -> tuple[RequestTemplate, ...]:
        return tuple(
            t for t in self.templates.values()
            if resource_type in t.consumed_types
        )


def _parse_param(template_id: str, raw: object, path_placeholders: set[str]) -> ParamSpec:
    if not isinstance(raw, dict):
        raise MalformedSpec(f"{template_id}: parameter entry is not an object")
    try:
        name = raw["name"]
        location = raw["in"]
        value_type = raw["type"]
    except KeyError as exc:
        raise MalformedSpec(f"{template_id}: parameter missing key {exc}") from None
    if not isinstance(name, str) or not name:
        raise MalformedSpec(f"{template_id}: parameter name must be a non-empty string")
    if location not in LOCATIONS:
        raise MalformedSpec(f"{template_id}: parameter {name!r} has bad location {location!r}")
    if value_type not in VALUE_TYPES:
        raise MalformedSpec(f"{template_id}: parameter {name!r} has bad type {value_type!r}")
    if location == "path" and name not in path_placeholders:
        raise MalformedSpec(f"{template_id}: path parameter {name!r} has no {{placeholder}}")

    consumes = raw.get("x-consumes")
    if consumes is not None and (not isinstance(consumes, str) or not consumes):
        raise MalformedSpec(f"{template_id}: x-consumes of {name!r} must be a non-empty string")

    required = bool(raw.get("required", False)) or location == "path"

    if consumes is not None:
        # Consumer parameters are filled from the object-id pool; any
        # dictionary or default in the document is ignored.
        return ParamSpec(name, location, value_type, required, (), None, consumes)

    dictionary = raw.get("x-dictionary")
    if not isinstance(dictionary, list) or not dictionary:
        raise MalformedSpec(f"{template_id}: parameter {name!r} needs a non-empty x-dictionary")
    if not all(isinstance(v, str) for v in dictionary):
        raise MalformedSpec(f"{template_id}: dictionary of {name!r} must hold strings")
    if "x-default" not in raw:
        raise MalformedSpec(f"{template_id}: parameter {name!r} is missing x-default")
    default = raw["x-default"]
    if default not in dictionary:
        raise DefaultNotInDictionary(
            f"{template_id}: default {default!r} of {name!r} not in dictionary"
        )
    return ParamSpec(name, location, value_type, required, tuple(dictionary), default, None)


def _parse_template(path: str, method: str, raw: object) -> RequestTemplate:
    template_id = f"{method} {path}"
    if not isinstance(raw, dict):
        raise MalformedSpec(f"{template_id}: operation entry is not an object")

    placeholders = set(_PLACEHOLDER_RE.findall(path))
    params = tuple(
        _parse_param(template_id, entry, placeholders)
        for entry in raw.get("parameters", [])
    )
    names = [spec.name for spec in params]
    if len(names) != len(set(names)):
        raise MalformedSpec(f"{template_id}: duplicate parameter names")

    path_params = {spec.name for spec in params if spec.location == "path"}
    if path_params != placeholders:
        missing = placeholders - path_params
        extra = path_params - placeholders
        raise MalformedSpec(
            f"{template_id}: path placeholders and path parameters disagree "
            f"(missing={sorted(missing)}, extra={sorted(extra)})"
        )

    produces = None
    if "x-produces" in raw:
        decl = raw["x-produces"]
        if (
            not isinstance(decl, dict)
            or not isinstance(decl.get("type"), str)
            or not isinstance(decl.get("pointer"), str)
        ):
            raise MalformedSpec(f"{template_id}: x-produces needs 'type' and 'pointer' strings")
        produces = (decl["type"], decl["pointer"])

    return RequestTemplate(template_id, method, path, params, produces)


def parse_spec(document: bytes | str) -> CompiledGrammar:
    """Parse grammar bytes into a :class:`CompiledGrammar`.

    Deterministic: identical bytes yield an identical grammar with templates
    in document order.  Raises :class:`MalformedSpec`,
    :class:`UnresolvableConsumer` or :class:`DefaultNotInDictionary`.
    """
    if isinstance(document, bytes):
        document = document.decode("utf-8")
    try:
        doc = json.loads(document)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MalformedSpec(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("paths"), dict):
        raise MalformedSpec("top level must be an object with a 'paths' object")

    templates: dict[str, RequestTemplate] = {}
    for path, operations in doc["paths"].items():
        if not isinstance(operations, dict):
            raise MalformedSpec(f"{path}: operations entry is not an object")
        for method, raw in operations.items():
            upper = method.upper()
            if upper not in METHODS:
                raise MalformedSpec(f"{path}: unsupported method {method!r}")
            template = _parse_template(path, upper, raw)
            if template.template_id in templates:
                raise MalformedSpec(f"duplicate template {template.template_id}")
            templates[template.template_id] = template

    produced = frozenset(t.produces[0] for t in templates.values() if t.produces)
    edges = set()
    for consumer in templates.values():
        for rtype in consumer.consumed_types:
            if rtype not in produced:
                raise UnresolvableConsumer(
                    f"{consumer.template_id}: consumes {rtype!r} which nothing produces"
                )
            for producer in templates.values():
                if producer.produces and producer.produces[0] == rtype:
                    edges.add((producer.template_id, rtype, consumer.template_id))

    return CompiledGrammar(templates, produced, frozenset(edges))


def parse_spec_file(path) -> CompiledGrammar:
    with open(path, "rb") as fh:
        return parse_spec(fh.read())


def grammar_document(grammar: CompiledGrammar) -> dict:
    """Rebuild the JSON document form; ``parse_spec`` round-trips it."""
    paths: dict[str, dict] = {}
    for template in grammar.templates.values():
        entry: dict = {"parameters": []}
        for spec in template.params:
            raw: dict = {
                "name": spec.name,
                "in": spec.location,
                "type": spec.value_type,
                "required": spec.required,
            }
            if spec.is_consumer:
                raw["x-consumes"] = spec.consumes
            else:
                raw["x-dictionary"] = list(spec.dictionary)
                raw["x-default"] = spec.default
            entry["parameters"].append(raw)
        if template.produces:
            entry["x-produces"] = {
                "type": template.produces[0],
                "pointer": template.produces[1],
            }
        paths.setdefault(template.path, {})[template.method] = entry
    return {"paths": paths}


def serialize_spec(grammar: CompiledGrammar) -> bytes:
    return json.dumps(grammar_document(grammar), indent=2).encode("utf-8")


def satisfiable_templates(grammar: CompiledGrammar, available: set[str] | frozenset[str]) -> list[str]:
    """Template ids whose every consumed type is in ``available``, in stable
    grammar order."""
    return [
        template_id
        for template_id, template in grammar.templates.items()
        if template.consumed_types <= available
    ]
