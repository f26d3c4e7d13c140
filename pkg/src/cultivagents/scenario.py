"""Scripted scenario files: one document bundling a gardener profile, provider
scripts for the selector and the agents, and an ordered list of user messages.
Scenario runs are fully deterministic, including timestamps and session ids."""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Callable

import yaml

from .agents import AgentSet, builtin_agent_set, load_agent_plugins
from .coordinator import CoordinatorConfig, SessionRuntime, run_round
from .events import MessageEnd, RoundError, RoundEvent, RoundStarted, session_created_frame, wire_frame
from .profile import ProfileValidationError, UserProfile, validate_profile
from .providers import SCRIPT_ERROR_NAMES, ScriptedProvider, ScriptRule
from .session import Session, create_session, export_transcript
from .store import SessionStore

DEFAULT_SESSION_ID = "scripted-session"
DEFAULT_START_TIME = datetime(2025, 1, 1, tzinfo=timezone.utc)


class ScenarioError(ValueError):
    """Malformed scenario file; message carries per-field diagnostics."""


@dataclass
class Scenario:
    profile: UserProfile
    selector_rules: list[ScriptRule]
    selector_default: str
    agent_rules: list[ScriptRule]
    agent_default: str
    user_messages: list[str]
    session_id: str = DEFAULT_SESSION_ID
    start_time: datetime = DEFAULT_START_TIME
    round_size: int = 3
    context_window: int = 30
    exclude_across_rounds: bool = False
    persona_path: str = ""


def _parse_script(section: object, where: str) -> tuple[list[ScriptRule], str]:
    if section is None:
        return [], ""
    if not isinstance(section, dict):
        raise ScenarioError(f"{where}: expected a mapping with 'default' and optional 'rules'")
    default = section.get("default", "")
    if not isinstance(default, str):
        raise ScenarioError(f"{where}.default: expected text")
    rules: list[ScriptRule] = []
    for i, raw in enumerate(section.get("rules") or []):
        label = f"{where}.rules[{i}]"
        if not isinstance(raw, dict) or not isinstance(raw.get("match"), str) or not raw["match"]:
            raise ScenarioError(f"{label}: needs a non-empty 'match' string")
        error = raw.get("error")
        if error is not None and error not in SCRIPT_ERROR_NAMES:
            raise ScenarioError(f"{label}: unknown error {error!r} (one of: {', '.join(SCRIPT_ERROR_NAMES)})")
        reply = raw.get("reply", "")
        if not isinstance(reply, str):
            raise ScenarioError(f"{label}: 'reply' must be text")
        rules.append(ScriptRule(match=raw["match"], reply=reply, error=error))
    return rules, default


def parse_scenario(path: str | Path) -> Scenario:
    p = Path(path)
    try:
        doc = yaml.safe_load(p.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {p}: {exc}") from exc
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{p}:{mark.line + 1}" if mark else str(p)
        raise ScenarioError(f"{where}: invalid YAML: {exc}") from exc
    if not isinstance(doc, dict):
        raise ScenarioError(f"{p}: expected a mapping at the top level")

    try:
        profile = validate_profile(doc.get("profile") or {})
    except ProfileValidationError as exc:
        details = "; ".join(f"profile.{f}: {m}" for f, m in exc.errors)
        raise ScenarioError(f"{p}: {details}") from exc

    selector_rules, selector_default = _parse_script(doc.get("selector_script"), f"{p}: selector_script")
    agent_rules, agent_default = _parse_script(doc.get("agent_script"), f"{p}: agent_script")

    messages = doc.get("user_messages") or []
    if not isinstance(messages, list) or any(not isinstance(m, str) for m in messages):
        raise ScenarioError(f"{p}: user_messages must be a list of strings")

    start_raw = doc.get("start_time")
    if start_raw is None:
        start_time = DEFAULT_START_TIME
    else:
        try:
            start_time = start_raw if isinstance(start_raw, datetime) else datetime.fromisoformat(str(start_raw))
        except ValueError as exc:
            raise ScenarioError(f"{p}: start_time: {exc}") from exc
        if start_time.tzinfo is None:
            start_time = start_time.replace(tzinfo=timezone.utc)

    try:
        return Scenario(
            profile=profile,
            selector_rules=selector_rules,
            selector_default=selector_default or "experience",
            agent_rules=agent_rules,
            agent_default=agent_default or "Happy to help with your garden.",
            user_messages=list(messages),
            session_id=str(doc.get("session_id") or DEFAULT_SESSION_ID),
            start_time=start_time,
            round_size=int(doc.get("round_size", 3)),
            context_window=int(doc.get("context_window", 30)),
            exclude_across_rounds=bool(doc.get("exclude_across_rounds", False)),
            persona_path=str(doc.get("personas") or ""),
        )
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{p}: {exc}") from exc


def ticking_clock(start: datetime, step_s: float = 1.0) -> Callable[[], datetime]:
    """Deterministic clock: each call advances by a fixed step."""
    count = -1

    def clock() -> datetime:
        nonlocal count
        count += 1
        return start + timedelta(seconds=count * step_s)

    return clock


@dataclass
class ScenarioResult:
    session: Session
    events: list[RoundEvent]
    frames: list[dict]
    export_text: str
    error_count: int = 0

    @property
    def completed_cleanly(self) -> bool:
        return self.error_count == 0


def scenario_agent_set(scenario: Scenario) -> AgentSet:
    if scenario.persona_path:
        return load_agent_plugins(scenario.persona_path)
    return builtin_agent_set()


def build_scenario_runtime(
    scenario: Scenario,
    selector_provider=None,
    agent_provider=None,
) -> SessionRuntime:
    """Deterministic runtime for a scenario; providers can be swapped (the
    acceptance suite substitutes an HTTP-backed pair) without changing the run."""
    agent_set = scenario_agent_set(scenario)
    session = create_session(
        scenario.profile,
        agent_set,
        session_id=scenario.session_id,
        created_at=scenario.start_time,
    )
    config = CoordinatorConfig(
        round_size=scenario.round_size,
        context_window=scenario.context_window,
        exclude_across_rounds=scenario.exclude_across_rounds,
    )
    return SessionRuntime(
        session,
        selector_provider or ScriptedProvider(scenario.selector_rules, scenario.selector_default),
        agent_provider or ScriptedProvider(scenario.agent_rules, scenario.agent_default),
        config,
        clock=ticking_clock(scenario.start_time),
    )


async def run_scenario(
    scenario: Scenario,
    store: SessionStore | None = None,
    runtime: SessionRuntime | None = None,
) -> ScenarioResult:
    """Run every user message through the round coordinator, collecting the
    full event list and the exact frame sequence a client would receive."""
    runtime = runtime or build_scenario_runtime(scenario)
    session = runtime.session
    if store is not None:
        store.create(session)

    events: list[RoundEvent] = []
    frames: list[dict] = [session_created_frame(session)]
    errors = 0
    for text in scenario.user_messages:
        async for event in run_round(runtime, text):
            events.append(event)
            frames.append(wire_frame(event))
            if isinstance(event, RoundError):
                errors += 1
            if store is not None and isinstance(event, (RoundStarted, MessageEnd)):
                store.append_entry(session.session_id, session.transcript[-1])
    return ScenarioResult(
        session=session,
        events=events,
        frames=frames,
        export_text=export_transcript(session),
        error_count=errors,
    )
