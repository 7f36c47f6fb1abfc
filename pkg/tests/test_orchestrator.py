from __future__ import annotations

import json

import pytest

from restfuzz import orchestrator as orch
from restfuzz.client import HttpClient, TargetUnreachable
from restfuzz.grammar import parse_spec
from restfuzz.mock_service import ALL_BUGS, BugConfig, mock_grammar_bytes, serve
from restfuzz.orchestrator import MODES, FuzzConfig, Fuzzer, fuzz_loop
from restfuzz.rendering import ReadyRequest
from restfuzz.reporting import load_replay, run_replay


@pytest.fixture(scope="module")
def grammar():
    return parse_spec(mock_grammar_bytes())


@pytest.fixture(scope="module")
def target():
    handle = serve(0, BugConfig())
    yield handle
    handle.stop()


@pytest.fixture(autouse=True)
def reset_target(request):
    if "target" in request.fixturenames:
        handle = request.getfixturevalue("target")
        with HttpClient(handle.base_url) as client:
            client.send(ReadyRequest("POST", "/__reset"))


def quick_config(base_url, mode="miner", requests=400, seed=3, **overrides):
    defaults = dict(
        target=base_url,
        mode=mode,
        max_requests=requests,
        seed=seed,
        train_interval=None,
        train_every_requests=150,
        train_async=False,
    )
    defaults.update(overrides)
    return FuzzConfig(**defaults)


class TestFuzzLoop:
    def test_zero_budget_yields_empty_metrics(self, grammar, target):
        metrics = fuzz_loop(quick_config(target.base_url, requests=0), grammar)
        assert metrics.requests_sent == 0
        assert metrics.iterations == 0
        assert metrics.unique_errors == 0

    def test_unreachable_target_fails_fast(self, grammar):
        config = quick_config("http://127.0.0.1:9", requests=10)
        with pytest.raises(TargetUnreachable):
            fuzz_loop(config, grammar)

    @pytest.mark.parametrize("mode", sorted(MODES))
    def test_every_mode_runs_and_conserves_counts(self, grammar, target, mode):
        metrics = fuzz_loop(quick_config(target.base_url, mode=mode), grammar)
        assert metrics.requests_sent >= 400
        assert sum(metrics.counts.values()) == metrics.requests_sent
        assert metrics.iterations > 0
        assert metrics.pass_rate() > 0

    def test_unknown_mode_rejected(self):
        with pytest.raises(ValueError):
            FuzzConfig(target="http://x", mode="turbo", max_requests=1)

    def test_budget_required(self):
        with pytest.raises(ValueError):
            FuzzConfig(target="http://x", mode="miner")

    def test_reports_written(self, grammar, target, tmp_path):
        config = quick_config(
            target.base_url, requests=300, report_dir=tmp_path / "run",
            enable_uaf_checker=True, enable_datadriven_checker=True,
        )
        metrics = fuzz_loop(config, grammar)
        report_dir = tmp_path / "run"
        on_disk = json.loads((report_dir / "metrics.json").read_text())
        assert on_disk["requests_sent"] == metrics.requests_sent
        assert (report_dir / "lengths.csv").read_text().startswith("length,count")
        assert (report_dir / "errors.jsonl").exists()
        assert (report_dir / "collection.jsonl").stat().st_size > 0

    def test_training_happens_and_is_noted(self, grammar, target):
        metrics = fuzz_loop(quick_config(target.base_url, requests=600), grammar)
        assert metrics.train_rounds >= 1
        assert metrics.counts_at_first_training is not None
        assert metrics.pass_rate_after_first_training() is not None

    def test_async_training_publishes_eventually(self, grammar, target):
        config = quick_config(
            target.base_url, requests=1200, train_async=True,
            train_every_requests=200,
        )
        metrics = fuzz_loop(config, grammar)
        assert metrics.train_rounds >= 1


class TestAblationIndependence:
    def test_disabling_the_model_leaves_selection_unchanged(
        self, grammar, target, monkeypatch
    ):
        """Same seed, training off: miner degrades to exactly seq-only.

        Selection draws from its own rng stream and never consults the list
        snapshot; rendering falls back to the traditional path when no lists
        exist.  The executed-template streams must therefore be identical.
        """
        streams: dict[str, list[tuple[str, ...]]] = {}
        real = orch.execute_candidate

        def record(mode_name):
            def wrapper(candidate_ids, *args, **kwargs):
                streams[mode_name].append(tuple(candidate_ids))
                return real(candidate_ids, *args, **kwargs)
            return wrapper

        for mode in ("miner", "seq-only"):
            streams[mode] = []
            with HttpClient(target.base_url) as client:
                client.send(ReadyRequest("POST", "/__reset"))
            monkeypatch.setattr(orch, "execute_candidate", record(mode))
            config = quick_config(
                target.base_url, mode=mode, requests=500, seed=21,
                train_every_requests=None,
            )
            fuzz_loop(config, grammar)
        assert streams["miner"] == streams["seq-only"]


class TestReplayFidelity:
    def test_stored_errors_reproduce_after_reset(self, grammar, tmp_path):
        handle = serve(0, BugConfig(frozenset(ALL_BUGS)))
        try:
            config = quick_config(
                handle.base_url, requests=2500, seed=5,
                report_dir=tmp_path / "armed",
                enable_uaf_checker=True, enable_datadriven_checker=True,
            )
            fuzzer = Fuzzer(config, grammar)
            fuzzer.run()
            records = fuzzer.errors.records()
            assert records, "expected some errors against the armed target"
            for record in records:
                with HttpClient(handle.base_url) as client:
                    client.send(ReadyRequest("POST", "/__reset"))
                    results = run_replay(load_replay(record.replay_path), client)
                for expected, actual in results:
                    assert actual.klass.value == expected, record.bucket_id
        finally:
            handle.stop()
