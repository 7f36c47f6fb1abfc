"""Run metrics, error bucketing with replay files, and replay execution."""

from __future__ import annotations

import hashlib
import json
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .client import HttpClient
from .execution import ExecutedStep
from .grammar import CompiledGrammar
from .rendering import ReadyRequest
from .responses import ResponseClass, ResponseRecord

KIND_RESPONSE_5XX = "response5xx"

_HEX_RUN_RE = re.compile(r"\b[0-9a-f]{8,}\b")
_DIGITS_RE = re.compile(r"\d+")
_WS_RE = re.compile(r"\s+")
_SLUG_RE = re.compile(r"[^a-z0-9]+")


class NoResponses(Exception):
    """Pass rate is undefined without any HTTP responses."""


def pass_rate(counts: Mapping[ResponseClass, int]) -> float:
    """Fraction of HTTP responses in 2xx or 5xx.

    Transport failures never produced an HTTP response and stay out of both
    numerator and denominator.
    """
    n2 = counts.get(ResponseClass.PASS_2XX, 0)
    n4 = counts.get(ResponseClass.REJECT_4XX, 0)
    n5 = counts.get(ResponseClass.ERROR_5XX, 0)
    total = n2 + n4 + n5
    if total <= 0:
        raise NoResponses("no HTTP responses recorded")
    return (n2 + n5) / total


def body_signature(body: str) -> str:
    """Normalized body fingerprint: ids and counters stripped, then hashed."""
    text = body.lower()
    text = _HEX_RUN_RE.sub("", text)
    text = _DIGITS_RE.sub("", text)
    text = _WS_RE.sub(" ", text).strip()
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def _slug(text: str) -> str:
    return _SLUG_RE.sub("-", text.lower()).strip("-")


def replay_line(step: ExecutedStep, grammar: CompiledGrammar) -> dict:
    """Self-contained replay entry for one executed request.

    Carries the rendered wire data plus symbolic rebind metadata: consumer
    parameters are re-resolved from live producer responses at replay time,
    so a reset target with fresh ids still reproduces the sequence.
    """
    template = grammar.templates[step.template_id]
    path_params = {
        spec.name: step.rendered_params[spec.name]
        for spec in template.params
        if spec.location == "path"
    }
    produces = None
    if template.produces:
        produces = {"type": template.produces[0], "pointer": template.produces[1]}
    headers = {
        key: value
        for key, value in step.request.headers.items()
        if key.lower() != "authorization"
    }
    return {
        "template_id": step.template_id,
        "method": step.request.method,
        "path_template": template.path,
        "path_params": path_params,
        "query": dict(step.request.query),
        "body": dict(step.request.body),
        "headers": headers,
        "rebind": dict(step.consumer_bindings),
        "produces": produces,
        "expected_status": step.response.status,
        "expected_class": step.response.klass.value,
    }


@dataclass
class ErrorRecord:
    """One deduplicated error bucket with its replay file."""

    bucket_id: str
    template_id: str
    status: int | None
    kind: str
    signature: str
    replay_path: str | None
    first_seen_iteration: int
    hits: int = 1

    def to_json(self) -> dict:
        return {
            "bucket_id": self.bucket_id,
            "template_id": self.template_id,
            "status": self.status,
            "kind": self.kind,
            "signature": self.signature,
            "replay_path": self.replay_path,
            "first_seen_iteration": self.first_seen_iteration,
            "hits": self.hits,
        }


class ErrorReport:
    """Buckets errors by (failing template, status, kind, body signature)."""

    def __init__(self, grammar: CompiledGrammar, replay_dir: Path | str | None = None):
        self._grammar = grammar
        self._replay_dir = Path(replay_dir) if replay_dir is not None else None
        self._buckets: dict[tuple, ErrorRecord] = {}

    def bucket_error(
        self,
        steps: Sequence[ExecutedStep],
        offending_index: int,
        kind: str,
        iteration: int,
    ) -> tuple[ErrorRecord, bool]:
        offending = steps[offending_index]
        signature = body_signature(offending.response.body)
        key = (offending.template_id, offending.response.status, kind, signature)
        record = self._buckets.get(key)
        if record is not None:
            record.hits += 1
            return record, False

        bucket_id = "--".join(
            (
                kind,
                _slug(offending.template_id),
                str(offending.response.status),
                signature[:8],
            )
        )
        replay_path = None
        if self._replay_dir is not None:
            self._replay_dir.mkdir(parents=True, exist_ok=True)
            path = self._replay_dir / f"{bucket_id}.jsonl"
            with open(path, "w", encoding="utf-8") as fh:
                for step in steps:
                    fh.write(json.dumps(replay_line(step, self._grammar)) + "\n")
            replay_path = str(path)
        record = ErrorRecord(
            bucket_id,
            offending.template_id,
            offending.response.status,
            kind,
            signature,
            replay_path,
            iteration,
        )
        self._buckets[key] = record
        return record, True

    def records(self) -> list[ErrorRecord]:
        return list(self._buckets.values())

    def __len__(self) -> int:
        return len(self._buckets)

    def write_jsonl(self, path: Path | str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for record in self.records():
                fh.write(json.dumps(record.to_json()) + "\n")


def load_replay(path: Path | str) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def run_replay(
    lines: Sequence[dict], client: HttpClient
) -> list[tuple[str | None, ResponseRecord]]:
    """Re-send a stored sequence, re-resolving consumer ids along the way.

    Returns one (expected class, actual response) tuple per request.  When
    the target state matches the original run the rebound ids equal the
    recorded ones and the requests go out byte-identical.
    """
    latest: dict[str, str] = {}
    results: list[tuple[str | None, ResponseRecord]] = []
    for line in lines:
        rebind = line.get("rebind", {})

        def resolve(name: str, recorded: str) -> str:
            rtype = rebind.get(name)
            if rtype is not None and rtype in latest:
                return latest[rtype]
            return recorded

        path = line["path_template"]
        for name, recorded in line.get("path_params", {}).items():
            path = path.replace("{" + name + "}", resolve(name, recorded))
        query = {
            name: resolve(name, value) for name, value in line.get("query", {}).items()
        }
        body = {
            name: resolve(name, value) for name, value in line.get("body", {}).items()
        }
        request = ReadyRequest(
            line["method"], path, query, body, dict(line.get("headers", {}))
        )
        record = client.send(request)
        results.append((line.get("expected_class"), record))

        produces = line.get("produces")
        if produces and record.klass is ResponseClass.PASS_2XX:
            try:
                doc = json.loads(record.body) if record.body else None
            except json.JSONDecodeError:
                doc = None
            node = doc
            for key in produces["pointer"].lstrip("/").split("/"):
                if not isinstance(node, dict) or key not in node:
                    node = None
                    break
                node = node[key]
            if isinstance(node, (str, int)):
                latest[produces["type"]] = str(node)
    return results


@dataclass
class RunMetrics:
    """Counters and distributions for one fuzzing run."""

    counts: Counter = field(default_factory=Counter)
    per_template_2xx: set[str] = field(default_factory=set)
    length_histogram: Counter = field(default_factory=Counter)
    iterations: int = 0
    wall_time: float = 0.0
    unique_errors: int = 0
    train_rounds: int = 0
    counts_at_first_training: Counter | None = None

    @property
    def requests_sent(self) -> int:
        return sum(self.counts.values())

    def observe(self, template_id: str, record: ResponseRecord) -> None:
        self.counts[record.klass] += 1
        if record.klass is ResponseClass.PASS_2XX:
            self.per_template_2xx.add(template_id)

    def note_executed_length(self, length: int) -> None:
        if length > 0:
            self.length_histogram[length] += 1

    def note_first_training(self) -> None:
        if self.counts_at_first_training is None:
            self.counts_at_first_training = Counter(self.counts)

    def pass_rate(self) -> float:
        return pass_rate(self.counts)

    def pass_rate_after_first_training(self) -> float | None:
        if self.counts_at_first_training is None:
            return None
        tail = Counter(self.counts)
        tail.subtract(self.counts_at_first_training)
        try:
            return pass_rate(tail)
        except NoResponses:
            return None

    def median_executed_length(self) -> float | None:
        total = sum(self.length_histogram.values())
        if total == 0:
            return None
        midpoint = (total + 1) // 2
        running = 0
        for length in sorted(self.length_histogram):
            running += self.length_histogram[length]
            if running >= midpoint:
                return float(length)
        return None  # pragma: no cover

    def to_json(self) -> dict:
        def counter_json(counter: Counter | None):
            if counter is None:
                return None
            return {klass.value: counter.get(klass, 0) for klass in ResponseClass}

        try:
            rate = self.pass_rate()
        except NoResponses:
            rate = None
        return {
            "requests_sent": self.requests_sent,
            "responses": counter_json(self.counts),
            "pass_rate": rate,
            "pass_rate_after_first_training": self.pass_rate_after_first_training(),
            "responses_at_first_training": counter_json(self.counts_at_first_training),
            "unique_request_templates": len(self.per_template_2xx),
            "templates_with_2xx": sorted(self.per_template_2xx),
            "length_histogram": {
                str(length): count
                for length, count in sorted(self.length_histogram.items())
            },
            "median_executed_length": self.median_executed_length(),
            "iterations": self.iterations,
            "unique_errors": self.unique_errors,
            "train_rounds": self.train_rounds,
            "wall_time_seconds": self.wall_time,
        }


def unique_request_templates(metrics: RunMetrics) -> int:
    """Number of distinct templates that ever got a 2xx answer."""
    return len(metrics.per_template_2xx)


def write_lengths_csv(metrics: RunMetrics, path: Path | str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("length,count\n")
        for length, count in sorted(metrics.length_histogram.items()):
            fh.write(f"{length},{count}\n")
