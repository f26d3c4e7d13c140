"""Command line: run scripted scenarios offline, validate persona files, and
launch the WebSocket service.

Exit codes: 0 success, 1 invariant violation or failed rounds, 2 input error.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import sys
from pathlib import Path

from .agents import AgentConfigError, check_persona_file
from .checker import check_event_log
from .config import ConfigError, load_config, validate_live_config
from .events import event_record, frame_json
from .scenario import ScenarioError, parse_scenario, run_scenario, scenario_agent_set
from .store import SessionStore

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_INPUT = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cultivagents",
        description="Multi-agent gardening chat: scripted runs, persona checks, live service.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a scripted scenario offline and write its artifacts")
    run_p.add_argument("--scenario", required=True, help="scenario YAML file")
    run_p.add_argument("--out", required=True, help="output directory for events.jsonl, frames.jsonl, export.txt")
    run_p.add_argument("--store", help="also persist the session record stream under this directory")

    check_p = sub.add_parser("check-personas", help="validate a persona definition file")
    check_p.add_argument("path", help="persona YAML file")

    serve_p = sub.add_parser("serve", help="start the WebSocket chat service")
    serve_p.add_argument("--config", help="service config YAML file")
    serve_p.add_argument("--scripted", action="store_true", help="use the offline scripted backend")
    serve_p.add_argument("--port", type=int, help="override the listening port")

    return parser


def cmd_run(args: argparse.Namespace) -> int:
    try:
        scenario = parse_scenario(args.scenario)
        agent_set = scenario_agent_set(scenario)
    except (ScenarioError, AgentConfigError) as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_INPUT

    store = SessionStore(args.store) if args.store else None
    result = asyncio.run(run_scenario(scenario, store=store))

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = [event_record(e) for e in result.events]
    (out_dir / "events.jsonl").write_text(
        "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in records), encoding="utf-8"
    )
    (out_dir / "frames.jsonl").write_text(
        "".join(frame_json(f) + "\n" for f in result.frames), encoding="utf-8"
    )
    (out_dir / "export.txt").write_text(result.export_text, encoding="utf-8")

    violations = check_event_log(
        records,
        round_size=scenario.round_size,
        full_agent_order=agent_set.ids(),
        transcript=result.session.transcript,
        exclude_across_rounds=scenario.exclude_across_rounds,
    )
    rounds_started = sum(1 for r in records if r["type"] == "round_started")
    print(
        f"ran {rounds_started} round(s): {len(records)} events, "
        f"{len(result.frames)} frames, export {len(result.export_text)} chars -> {out_dir}"
    )
    if violations:
        for violation in violations:
            print(f"invariant violation: {violation}", file=sys.stderr)
        return EXIT_VIOLATION
    if result.error_count:
        print(f"{result.error_count} round(s) ended with an error frame", file=sys.stderr)
        return EXIT_VIOLATION
    return EXIT_OK


def cmd_check_personas(args: argparse.Namespace) -> int:
    problems = check_persona_file(args.path)
    if problems:
        for problem in problems:
            print(problem, file=sys.stderr)
        return EXIT_INPUT
    print(f"{args.path}: ok")
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    try:
        config = load_config(args.config, scripted=args.scripted or None, port=args.port)
        validate_live_config(config)
    except (ConfigError, AgentConfigError) as exc:
        print(f"startup error: {exc}", file=sys.stderr)
        return EXIT_INPUT

    import uvicorn

    from .service import create_app

    app = create_app(config)
    try:
        uvicorn.run(app, host=config.host, port=config.port, log_level="info")
    except (OSError, SystemExit) as exc:
        print(f"startup error: could not serve on {config.host}:{config.port}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return cmd_run(args)
    if args.command == "check-personas":
        return cmd_check_personas(args)
    if args.command == "serve":
        return cmd_serve(args)
    raise AssertionError(f"unhandled command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
