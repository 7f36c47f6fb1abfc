"""Command line entry points: ``fuzz``, ``replay`` and ``serve``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .client import HttpClient, TargetUnreachable
from .grammar import parse_spec_file
from .mock_service import BugConfig, serve
from .orchestrator import MODES, FuzzConfig, fuzz_loop
from .recommender import ModelConfig
from .reporting import load_replay, run_replay


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="restfuzz",
        description="Stateful REST API fuzzer with a deterministic mock target.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    fuzz = sub.add_parser("fuzz", help="run a fuzzing session")
    fuzz.add_argument("--spec", required=True, help="grammar file (JSON)")
    fuzz.add_argument("--target", required=True, help="target base URL")
    fuzz.add_argument("--mode", choices=sorted(MODES), default="miner")
    fuzz.add_argument("--duration", type=float, default=None, help="budget in seconds")
    fuzz.add_argument("--max-requests", type=int, default=None, help="budget in requests")
    fuzz.add_argument("--seed", type=int, default=0)
    fuzz.add_argument("--train-interval", type=float, default=7200.0,
                      help="seconds between training rounds")
    fuzz.add_argument("--train-every-requests", type=int, default=None,
                      help="trigger training every N requests instead of by time")
    fuzz.add_argument("--train-sync", action="store_true",
                      help="train inline instead of on the background worker")
    fuzz.add_argument("--enable-uaf-checker", action="store_true")
    fuzz.add_argument("--enable-datadriven-checker", action="store_true")
    fuzz.add_argument("--report-dir", default=None)
    fuzz.add_argument("--dump-weights", action="store_true",
                      help="write per-round weight dumps under the report dir")
    fuzz.add_argument("--max-sequence-length", type=int, default=10)
    fuzz.add_argument("--auth-token", default=None)
    fuzz.add_argument("--verbose", action="store_true")

    replay = sub.add_parser("replay", help="re-send a stored replay file")
    replay.add_argument("--file", required=True)
    replay.add_argument("--target", required=True)

    server = sub.add_parser("serve", help="run the mock target")
    server.add_argument("--port", type=int, required=True)
    server.add_argument("--bugs", default="",
                        help="comma-separated bug ids, e.g. b-uaf,b-undef")
    server.add_argument("--seed", type=int, default=0)
    return parser


def _cmd_fuzz(args: argparse.Namespace) -> int:
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.report_dir:
        report_dir = Path(args.report_dir)
        report_dir.mkdir(parents=True, exist_ok=True)
        handler = logging.FileHandler(report_dir / "training.log")
        handler.setFormatter(logging.Formatter("%(asctime)s %(message)s"))
        training_logger = logging.getLogger("restfuzz.training")
        training_logger.addHandler(handler)
        training_logger.setLevel(logging.INFO)

    if args.duration is None and args.max_requests is None:
        print("fuzz needs a budget: --duration and/or --max-requests",
              file=sys.stderr)
        return 2
    grammar = parse_spec_file(args.spec)
    config = FuzzConfig(
        target=args.target,
        mode=args.mode,
        max_requests=args.max_requests,
        duration=args.duration,
        seed=args.seed,
        train_interval=args.train_interval,
        train_every_requests=args.train_every_requests,
        train_async=not args.train_sync,
        enable_uaf_checker=args.enable_uaf_checker,
        enable_datadriven_checker=args.enable_datadriven_checker,
        report_dir=args.report_dir,
        max_sequence_length=args.max_sequence_length,
        model=ModelConfig(),
        auth_token=args.auth_token,
        dump_weights=args.dump_weights,
    )
    try:
        metrics = fuzz_loop(config, grammar)
    except TargetUnreachable as exc:
        print(f"target unreachable: {exc}", file=sys.stderr)
        return 1
    json.dump(metrics.to_json(), sys.stdout, indent=2)
    print()
    return 0


def _cmd_replay(args: argparse.Namespace) -> int:
    lines = load_replay(args.file)
    with HttpClient(args.target) as client:
        results = run_replay(lines, client)
    all_match = True
    for index, (expected, record) in enumerate(results, start=1):
        actual = record.klass.value
        status = record.status if record.status is not None else "-"
        if expected is None:
            print(f"{index}: {status} {actual}")
        else:
            match = "match" if expected == actual else f"MISMATCH (expected {expected})"
            all_match = all_match and expected == actual
            print(f"{index}: {status} {actual} {match}")
    return 0 if all_match else 2


def _cmd_serve(args: argparse.Namespace) -> int:
    bugs = BugConfig.parse(args.bugs, seed=args.seed)
    handle = serve(args.port, bugs)
    print(f"mock target listening on {handle.base_url} "
          f"(bugs: {', '.join(sorted(bugs.armed)) or 'none'})")
    try:
        handle.thread.join()
    except KeyboardInterrupt:
        handle.stop()
    return 0


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "fuzz":
        return _cmd_fuzz(args)
    if args.command == "replay":
        return _cmd_replay(args)
    return _cmd_serve(args)


if __name__ == "__main__":
    raise SystemExit(main())
