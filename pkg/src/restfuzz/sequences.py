"""Sequence templates: length-weighted seed selection and BFS extension."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .grammar import CompiledGrammar, satisfiable_templates
from .responses import ResponseClass

DEFAULT_MAX_SEQUENCE_LENGTH = 10


class EmptySeedSet(Exception):
    """Selection was asked to draw from zero seeds."""


@dataclass(frozen=True)
class SequenceTemplate:
    """An ordered, dependency-satisfiable list of request-template ids."""

    template_ids: tuple[str, ...] = ()

    @property
    def length(self) -> int:
        return len(self.template_ids)

    def extended_with(self, template_id: str) -> "SequenceTemplate":
        return SequenceTemplate(self.template_ids + (template_id,))


EMPTY_SEQUENCE = SequenceTemplate()


class ExtensionResult:
    EXTENDED = "extended"
    FAILED = "failed"


def selection_weights(
    seeds: Sequence[SequenceTemplate],
) -> list[tuple[SequenceTemplate, float, float]]:
    """Weight each seed by log10(length + 1) and normalize to probabilities.

    Longer seeds get larger selection probability; the weights grow slowly
    enough that short seeds still get executions.
    """
    if not seeds:
        raise EmptySeedSet("no seed sequence templates to select from")
    weights = [math.log10(seed.length + 1) for seed in seeds]
    total = sum(weights)
    if total <= 0.0:
        # All seeds have length 0 (only possible with bootstrap-only pools);
        # fall back to uniform so selection stays well defined.
        probs = [1.0 / len(seeds)] * len(seeds)
    else:
        probs = [w / total for w in weights]
    return list(zip(seeds, weights, probs))

def select_seed(seeds: Sequence[SequenceTemplate], rng: np.random.Generator) -> SequenceTemplate:
    """Draw one seed according to :func:`selection_weights`."""
    weighted = selection_weights(seeds)
    cumulative = np.cumsum([prob for _, _, prob in weighted])
    draw = rng.random()
    index = int(np.searchsorted(cumulative, draw, side="right"))
    return weighted[min(index, len(weighted) - 1)][0]


def produced_types(seq: SequenceTemplate, grammar: CompiledGrammar) -> frozenset[str]:
    types = set()
    for template_id in seq.template_ids:
        produces = grammar.templates[template_id].produces
        if produces:
            types.add(produces[0])
    return frozenset(types)


def extend(
    seed: SequenceTemplate,
    grammar: CompiledGrammar,
    max_sequence_length: int = DEFAULT_MAX_SEQUENCE_LENGTH,
) -> list[SequenceTemplate]:
    """All one-request extensions of ``seed`` that stay dependency-satisfiable.

    One candidate per template whose consumed types the seed prefix already
    produces, ordered by appended template id.  Empty when the seed sits at
    the length cap.
    """
    if seed.length >= max_sequence_length:
        return []
    available = produced_types(seed, grammar)
    return [
        seed.extended_with(template_id)
        for template_id in sorted(satisfiable_templates(grammar, available))
    ]


def classify_extension(
    candidate: SequenceTemplate, responses: Sequence[ResponseClass]
) -> str:
    """A candidate extends successfully iff its last response is 2xx."""
    if len(responses) != candidate.length:
        raise ValueError("one response class per request required")
    if responses and responses[-1] is ResponseClass.PASS_2XX:
        return ExtensionResult.EXTENDED
    return ExtensionResult.FAILED


def is_satisfiable(seq: SequenceTemplate, grammar: CompiledGrammar) -> bool:
    """Re-derive positional satisfiability (used by tests and invariants)."""
    available: set[str] = set()
    for template_id in seq.template_ids:
        template = grammar.templates.get(template_id)
        if template is None or not template.consumed_types <= available:
            return False
        if template.produces:
            available.add(template.produces[0])
    return True
