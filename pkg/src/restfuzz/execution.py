"""Drive one rendered sequence against the target and keep the evidence."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .client import HttpClient
from .collection import CollectionStore
from .grammar import CompiledGrammar
from .rendering import (
    MissingProducerId,
    ParamValueList,
    ReadyRequest,
    RenderMode,
    render_sequence,
)
from .responses import ResponseClass, ResponseRecord

Observer = Callable[[str, ResponseRecord], None]


@dataclass(frozen=True)
class ExecutedStep:
    position: int
    template_id: str
    request: ReadyRequest
    rendered_params: dict[str, str]
    defaults: dict[str, str]
    consumer_bindings: dict[str, str]
    response: ResponseRecord


@dataclass
class ExecutedSequence:
    template_ids: tuple[str, ...]
    steps: list[ExecutedStep]
    completed: bool
    abort_reason: str | None = None

    @property
    def response_classes(self) -> list[ResponseClass]:
        return [step.response.klass for step in self.steps]

    @property
    def sent(self) -> int:
        return len(self.steps)


def execute_candidate(
    candidate_ids: Sequence[str],
    grammar: CompiledGrammar,
    list_snapshot: Mapping[str, Sequence[ParamValueList]],
    mode: RenderMode,
    rng: np.random.Generator,
    client: HttpClient,
    store: CollectionStore | None = None,
    observe: Observer | None = None,
    should_stop: Callable[[], bool] | None = None,
) -> ExecutedSequence:
    """Render, send and record a candidate sequence request by request.

    Producer ids flow into the pool between positions; outcomes are written
    through the collection store's standard recording path.  A consumer
    whose producer never yielded an id aborts the execution.
    """
    executed = ExecutedSequence(tuple(candidate_ids), [], completed=False)
    generator = render_sequence(candidate_ids, grammar, list_snapshot, mode, rng, store)
    record: ResponseRecord | None = None
    try:
        while True:
            step = generator.send(record) if record is not None else next(generator)
            if should_stop is not None and should_stop():
                executed.abort_reason = "budget exhausted"
                return executed
            record = client.send(step.request)
            if observe is not None:
                observe(step.template_id, record)
            if store is not None:
                store.record_request_outcome(
                    step.template_id, step.rendered_params, step.defaults, record.klass
                )
            executed.steps.append(
                ExecutedStep(
                    len(executed.steps),
                    step.template_id,
                    step.request,
                    step.rendered_params,
                    step.defaults,
                    step.consumer_bindings,
                    record,
                )
            )
    except StopIteration:
        executed.completed = True
    except MissingProducerId as exc:
        executed.abort_reason = str(exc)
    return executed
