"""Long-running chat service: WebSocket wire protocol, session ownership,
write-after-each-entry persistence, transcript export, and a health endpoint."""

from __future__ import annotations

import json
import logging
from datetime import datetime
from pathlib import Path
from typing import AsyncIterator, Callable, Mapping

import httpx
from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.staticfiles import StaticFiles

from .agents import AgentSet, builtin_agent_set, load_agent_plugins
from .config import ServiceConfig
from .coordinator import RoundInFlightError, SessionRuntime, run_round
from .events import (
    MessageEnd,
    RoundStarted,
    error_frame,
    export_payload_frame,
    frame_json,
    session_created_frame,
    wire_frame,
)
from .profile import ProfileValidationError, validate_profile
from .providers import ChatProvider, OpenAICompatibleProvider, ScriptedProvider, ScriptRule
from .session import create_session, export_transcript
from .store import SessionNotFoundError, SessionStore, StoreError

logger = logging.getLogger(__name__)

# Keyword routing plus persona-voiced replies so `serve --scripted` gives a
# sensible offline demo without a model.
DEMO_SELECTOR_RULES = [
    ScriptRule(match="plant", reply="environment"),
    ScriptRule(match="season", reply="environment"),
    ScriptRule(match="weather", reply="environment"),
    ScriptRule(match="cultur", reply="ethnobotany"),
    ScriptRule(match="histor", reply="ethnobotany"),
    ScriptRule(match="tradition", reply="ethnobotany"),
]
DEMO_AGENT_RULES = [
    ScriptRule(
        match="plant",
        reply=(
            "Right now is a good planting window for **cool-season greens** like "
            "collards, kale, and lettuce. Check your local frost dates before "
            "sowing anything tender."
        ),
    ),
    ScriptRule(
        match="cool-season greens",
        reply=(
            "Greens like collards have long histories on family tables; many "
            "communities braise the leaves and save seed from the strongest "
            "plants. Traditional uses differ from validated practice, so treat "
            "stories and science as complements."
        ),
    ),
]
DEMO_AGENT_DEFAULT = (
    "Here is a practical next step for your garden: start small, observe "
    "daily, and note what changes. Ask me about planting, seasons, or plant "
    "traditions for more specific help."
)


def demo_scripted_providers() -> tuple[ScriptedProvider, ScriptedProvider]:
    return (
        ScriptedProvider(DEMO_SELECTOR_RULES, default_reply="experience"),
        ScriptedProvider(DEMO_AGENT_RULES, default_reply=DEMO_AGENT_DEFAULT),
    )


class SessionService:
    """Owns live sessions. One logical owner per session: rounds for a session
    run strictly one at a time, while distinct sessions run concurrently."""

    def __init__(
        self,
        config: ServiceConfig,
        selector_provider: ChatProvider,
        agent_provider: ChatProvider,
        store: SessionStore,
        agent_set: AgentSet,
        clock: Callable[[], datetime] | None = None,
    ):
        self.config = config
        self.selector_provider = selector_provider
        self.agent_provider = agent_provider
        self.store = store
        self.agent_set = agent_set
        self.clock = clock
        self.runtimes: dict[str, SessionRuntime] = {}

    def _runtime_for(self, session) -> SessionRuntime:
        runtime = SessionRuntime(
            session,
            self.selector_provider,
            self.agent_provider,
            self.config.coordinator_config(),
            clock=self.clock,
        )
        self.runtimes[session.session_id] = runtime
        return runtime

    def create(self, raw_profile: Mapping[str, object]) -> tuple[SessionRuntime, dict]:
        """Validate the onboarding profile and open a persisted session.
        Raises ProfileValidationError (all bad fields) or StoreError."""
        profile = validate_profile(raw_profile)
        session = create_session(profile, self.agent_set)
        self.store.create(session)
        runtime = self._runtime_for(session)
        return runtime, session_created_frame(session)

    def get(self, session_id: str) -> SessionRuntime | None:
        """In-memory runtime, or a restore from the durable store."""
        runtime = self.runtimes.get(session_id)
        if runtime is not None:
            return runtime
        try:
            session = self.store.load(session_id)
        except SessionNotFoundError:
            return None
        return self._runtime_for(session)

    async def stream_user_message(self, session_id: str, text: str) -> AsyncIterator[dict]:
        """Run one round, persisting each transcript entry as it completes and
        relaying coordinator events as wire frames."""
        runtime = self.runtimes[session_id]
        async for event in run_round(runtime, text):
            if isinstance(event, (RoundStarted, MessageEnd)):
                self.store.append_entry(session_id, runtime.session.transcript[-1])
            yield wire_frame(event)

    def export(self, session_id: str) -> str:
        runtime = self.get(session_id)
        if runtime is None:
            raise SessionNotFoundError(session_id)
        return export_transcript(runtime.session)

    def replay_frames(self, session_id: str) -> list[dict]:
        """Frames a reconnecting client needs to rebuild its view."""
        runtime = self.get(session_id)
        if runtime is None:
            raise SessionNotFoundError(session_id)
        frames: list[dict] = [session_created_frame(runtime.session)]
        for entry in runtime.session.transcript:
            frames.append(
                {
                    "type": "replay_entry",
                    "speaker": entry.speaker,
                    "content": entry.content,
                    "round": entry.round_index,
                    "turn": entry.turn_within_round,
                }
            )
        frames.append({"type": "replay_complete"})
        return frames


def build_providers(config: ServiceConfig) -> tuple[ChatProvider, ChatProvider]:
    if config.scripted:
        return demo_scripted_providers()
    selector = OpenAICompatibleProvider(
        config.provider_endpoint,
        config.api_key,
        config.selector_model or config.agent_model,
        timeout_s=config.request_timeout_s,
    )
    agents = OpenAICompatibleProvider(
        config.provider_endpoint,
        config.api_key,
        config.agent_model,
        timeout_s=config.request_timeout_s,
    )
    return selector, agents


def build_agent_set(config: ServiceConfig) -> AgentSet:
    if config.persona_path:
        return load_agent_plugins(config.persona_path)
    return builtin_agent_set()


async def _probe_provider(endpoint: str) -> bool:
    try:
        async with httpx.AsyncClient(timeout=3.0) as client:
            resp = await client.get(f"{endpoint.rstrip('/')}/models")
        return resp.status_code < 500
    except httpx.HTTPError:
        return False


def create_app(config: ServiceConfig, service: SessionService | None = None) -> FastAPI:
    if service is None:
        selector_provider, agent_provider = build_providers(config)
        service = SessionService(
            config,
            selector_provider,
            agent_provider,
            SessionStore(config.store_dir),
            build_agent_set(config),
        )

    app = FastAPI(title="cultivagents", version="0.1.0")
    app.state.service = service

    @app.get("/healthz")
    async def healthz():
        reachable = True if config.scripted else await _probe_provider(config.provider_endpoint)
        return {
            "status": "ok",
            "provider_mode": "scripted" if config.scripted else "live",
            "provider_reachable": reachable,
        }

    @app.websocket("/ws")
    async def websocket_chat(ws: WebSocket):
        await ws.accept()

        async def send(frame: dict) -> None:
            await ws.send_text(frame_json(frame))

        try:
            while True:
                raw = await ws.receive_text()
                try:
                    data = json.loads(raw)
                except json.JSONDecodeError:
                    await send(error_frame("bad_frame", "frames must be JSON objects"))
                    continue
                if not isinstance(data, dict):
                    await send(error_frame("bad_frame", "frames must be JSON objects"))
                    continue
                await _dispatch(service, send, data)
        except WebSocketDisconnect:
            pass

    if config.static_dir and Path(config.static_dir).is_dir():
        app.mount("/", StaticFiles(directory=config.static_dir, html=True), name="ui")

    return app


async def _dispatch(service: SessionService, send, data: dict) -> None:
    frame_type = data.get("type")

    if frame_type == "create_session":
        try:
            _, frame = service.create(data.get("profile") or {})
        except ProfileValidationError as exc:
            await send(error_frame("invalid_profile", "; ".join(f"{f}: {m}" for f, m in exc.errors)))
        except StoreError as exc:
            await send(error_frame("store_error", str(exc)))
        else:
            await send(frame)
        return

    if frame_type == "user_message":
        session_id = str(data.get("session_id") or "")
        runtime = service.get(session_id)
        if runtime is None:
            await send(error_frame("unknown_session", f"no session {session_id!r}"))
            return
        if runtime.round_active:
            await send(error_frame("busy", "a round is already in flight for this session"))
            return
        try:
            async for frame in service.stream_user_message(session_id, str(data.get("text") or "")):
                await send(frame)
        except RoundInFlightError:
            await send(error_frame("busy", "a round is already in flight for this session"))
        return

    if frame_type == "export_request":
        session_id = str(data.get("session_id") or "")
        try:
            text = service.export(session_id)
        except SessionNotFoundError:
            await send(error_frame("unknown_session", f"no session {session_id!r}"))
        else:
            await send(export_payload_frame(text))
        return

    if frame_type == "resume_session":
        session_id = str(data.get("session_id") or "")
        try:
            frames = service.replay_frames(session_id)
        except SessionNotFoundError:
            await send(error_frame("unknown_session", f"no session {session_id!r}"))
        except StoreError as exc:
            await send(error_frame("store_error", str(exc)))
        else:
            for frame in frames:
                await send(frame)
        return

    await send(error_frame("unknown_type", f"unsupported frame type {frame_type!r}"))
