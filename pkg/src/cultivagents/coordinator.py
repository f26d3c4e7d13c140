"""Round lifecycle: model-based speaker selection with previous-speaker
exclusion, fixed-length rounds, round-local selector history that resets
between rounds, and assembly of each agent's provider request."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from datetime import datetime
from functools import lru_cache
from importlib import resources
from typing import AsyncIterator, Callable, Collection, Sequence

from .agents import AgentSet, AgentSpec, effective_prompt
from .events import (
    MessageEnd,
    MessageStart,
    RoundComplete,
    RoundError,
    RoundEvent,
    RoundStarted,
    SpeakerSelected,
    TokenChunk,
)
from .providers import (
    ChatProvider,
    MalformedStreamError,
    ProviderAuthError,
    ProviderError,
    ProviderMessage,
    ProviderRateLimited,
    ProviderRequest,
    ProviderTimeout,
    ProviderTransientError,
    collect_reply,
    request_with_extra_message,
)
from .session import USER_SPEAKER, Session, TranscriptEntry, utc_now

logger = logging.getLogger(__name__)

SELECTOR_MAX_TOKENS = 32

RETRY_INSTRUCTION = (
    "Your previous reply was not one of the eligible agent ids. "
    "Reply with exactly one of: {ids}."
)

# Folded into the system message (rather than appended as a trailing message)
# so the last context message stays matchable by scripted backends.
TURN_INSTRUCTION = (
    "Coordination note: you are one of several specialist agents replying in "
    "this round. Add a complementary perspective. Do not restate points "
    "another agent has already made in this round; build on them or cover "
    "what is missing."
)


@dataclass
class CoordinatorConfig:
    round_size: int = 3
    context_window: int = 30  # prior-round transcript entries shown to agents
    selector_temperature: float = 0.0
    agent_temperature: float = 0.7
    max_tokens: int = 700
    selector_model: str = ""
    agent_model: str = ""
    exclude_across_rounds: bool = False

    def __post_init__(self):
        if self.round_size < 1:
            raise ValueError("round_size must be >= 1")
        if self.context_window < 0:
            raise ValueError("context_window must be >= 0")


@dataclass(frozen=True)
class SelectorDecision:
    chosen: str
    source: str  # "model" | "fallback"
    attempts: int


@dataclass
class RoundState:
    """Mutable per-round bookkeeping; confined to the running round."""

    round_index: int
    turn: int
    selector_history: list[ProviderMessage]
    previous_speaker: str | None
    round_size: int


class RoundInFlightError(RuntimeError):
    """A session runs at most one round at a time."""


class RoundRobinCursor:
    """Deterministic fallback chooser. Scans the full agent order from the
    cursor position, takes the first eligible id, then advances just past it;
    starvation-free for any sequence of eligible sets."""

    def __init__(self, order: Sequence[str]):
        self.order = list(order)
        self.position = 0

    def next_eligible(self, eligible: Collection[str]) -> str:
        size = len(self.order)
        for step in range(size):
            candidate = self.order[(self.position + step) % size]
            if candidate in eligible:
                self.position = (self.position + step + 1) % size
                return candidate
        raise ValueError("no eligible agent in rotation order")


def eligible_agents(agents: AgentSet, previous_speaker: str | None) -> tuple[str, ...]:
    """All agent ids in set order, minus the immediately previous speaker.
    Never empty: agent sets have at least two members."""
    if previous_speaker is None:
        return agents.ids()
    return tuple(aid for aid in agents.ids() if aid != previous_speaker)


@lru_cache(maxsize=1)
def _selector_prompt_template() -> str:
    return resources.files("cultivagents").joinpath("data/selector_prompt.txt").read_text(encoding="utf-8")


def build_selector_prompt(eligible_specs: Sequence[AgentSpec]) -> str:
    lines = "\n".join(f"- {spec.id} ({spec.display_name}): {spec.description}" for spec in eligible_specs)
    return _selector_prompt_template().format(agent_lines=lines)


def parse_selector_reply(reply: str, eligible: Sequence[str]) -> str | None:
    """Case-insensitive id match after trimming; if the reply mentions several
    eligible ids, the earliest occurrence wins. None when nothing matches."""
    stripped = reply.strip().lower()
    for agent_id in eligible:
        if stripped == agent_id.lower():
            return agent_id
    hits = []
    for order, agent_id in enumerate(eligible):
        m = re.search(rf"\b{re.escape(agent_id)}\b", reply, re.IGNORECASE)
        if m:
            hits.append((m.start(), order, agent_id))
    if hits:
        return min(hits)[2]
    return None


async def select_speaker(
    selector: ChatProvider,
    selector_prompt: str,
    history: Sequence[ProviderMessage],
    eligible: Sequence[str],
    cursor: RoundRobinCursor,
    *,
    temperature: float = 0.0,
    model: str = "",
) -> SelectorDecision:
    """Ask the selector model for the next speaker. One corrective retry on an
    unparseable or ineligible reply, then deterministic round-robin fallback.
    Transport errors propagate; the caller aborts the round."""
    request = ProviderRequest(
        system_prompt=selector_prompt,
        messages=tuple(history),
        temperature=temperature,
        max_tokens=SELECTOR_MAX_TOKENS,
        model_name=model,
    )
    reply = await collect_reply(selector, request)
    chosen = parse_selector_reply(reply, eligible)
    if chosen is not None:
        return SelectorDecision(chosen, "model", 1)

    corrective = ProviderMessage("moderator", RETRY_INSTRUCTION.format(ids=", ".join(eligible)))
    reply = await collect_reply(selector, request_with_extra_message(request, corrective))
    chosen = parse_selector_reply(reply, eligible)
    if chosen is not None:
        return SelectorDecision(chosen, "model", 2)

    fallback = cursor.next_eligible(eligible)
    logger.info("selector fell back to %s (eligible: %s)", fallback, ", ".join(eligible))
    return SelectorDecision(fallback, "fallback", 2)


class SessionRuntime:
    """Binds one session to its providers and coordination state.

    Effective prompts are computed once from the session's creation date and
    profile, and reused for every turn. The selector history lives here so its
    end-of-round reset is observable across rounds.
    """

    def __init__(
        self,
        session: Session,
        selector_provider: ChatProvider,
        agent_provider: ChatProvider,
        config: CoordinatorConfig | None = None,
        clock: Callable[[], datetime] | None = None,
    ):
        self.session = session
        self.selector_provider = selector_provider
        self.agent_provider = agent_provider
        self.config = config or CoordinatorConfig()
        self.clock = clock or utc_now
        self.effective_prompts = {
            spec.id: effective_prompt(spec, session.profile, session.created_at.date())
            for spec in session.agent_set.agents
        }
        self.selector_history: list[ProviderMessage] = []
        self.fallback_cursor = RoundRobinCursor(session.agent_set.ids())
        self.last_round_final_speaker: str | None = None
        self.round_active = False


def _speaker_label(agents: AgentSet, speaker: str) -> str:
    return speaker if speaker == USER_SPEAKER else agents.display_name(speaker)


def build_agent_request(runtime: SessionRuntime, agent_id: str, round_index: int) -> ProviderRequest:
    """Context for one agent turn: the agent's effective prompt as the system
    message, a rolling window of prior-round transcript entries, then every
    message of the current round so far (so later speakers can build on
    earlier ones)."""
    cfg = runtime.config
    session = runtime.session
    window: list[ProviderMessage] = []
    if cfg.context_window > 0:
        prior = [e for e in session.transcript if e.round_index < round_index]
        for entry in prior[-cfg.context_window:]:
            window.append(ProviderMessage(_speaker_label(session.agent_set, entry.speaker), entry.content))
    system = runtime.effective_prompts[agent_id] + "\n\n" + TURN_INSTRUCTION
    return ProviderRequest(
        system_prompt=system,
        messages=tuple(window) + tuple(runtime.selector_history),
        temperature=cfg.agent_temperature,
        max_tokens=cfg.max_tokens,
        model_name=cfg.agent_model,
    )


def _error_code(exc: ProviderError) -> str:
    if isinstance(exc, ProviderTimeout):
        return "provider_timeout"
    if isinstance(exc, ProviderAuthError):
        return "provider_auth"
    if isinstance(exc, ProviderRateLimited):
        return "provider_rate_limited"
    if isinstance(exc, MalformedStreamError):
        return "provider_malformed_stream"
    if isinstance(exc, ProviderTransientError):
        return "provider_unavailable"
    return "provider_error"


async def run_round(runtime: SessionRuntime, user_text: str) -> AsyncIterator[RoundEvent]:
    """Run one full round for a user message, yielding turn-ordered events.

    Exactly round_size agent messages are produced unless a provider failure
    ends the round early (the only sanctioned early termination). Either way
    the selector history is cleared at the end while the session transcript is
    retained.
    """
    if runtime.round_active:
        raise RoundInFlightError(f"session {runtime.session.session_id} already has a round in flight")
    runtime.round_active = True
    session = runtime.session
    cfg = runtime.config
    agents = session.agent_set
    round_index = session.round_counter + 1

    runtime.selector_history.append(ProviderMessage(USER_SPEAKER, user_text))
    session.append_entry(
        TranscriptEntry(
            speaker=USER_SPEAKER,
            content=user_text,
            round_index=round_index,
            turn_within_round=0,
            timestamp=runtime.clock(),
        )
    )

    previous = runtime.last_round_final_speaker if cfg.exclude_across_rounds else None
    state = RoundState(
        round_index=round_index,
        turn=1,
        selector_history=runtime.selector_history,
        previous_speaker=previous,
        round_size=cfg.round_size,
    )
    try:
        yield RoundStarted(round_index, history_len=len(runtime.selector_history))
        for turn in range(1, cfg.round_size + 1):
            state.turn = turn
            state.previous_speaker = previous
            eligible = eligible_agents(agents, previous)
            prompt = build_selector_prompt([agents.get(aid) for aid in eligible])
            decision = await select_speaker(
                runtime.selector_provider,
                prompt,
                runtime.selector_history,
                eligible,
                runtime.fallback_cursor,
                temperature=cfg.selector_temperature,
                model=cfg.selector_model,
            )
            yield SpeakerSelected(round_index, turn, decision.chosen, eligible, decision.source, decision.attempts)
            yield MessageStart(round_index, turn, decision.chosen)

            request = build_agent_request(runtime, decision.chosen, round_index)
            parts: list[str] = []
            async for delta in runtime.agent_provider.stream(request):
                if delta.text:
                    parts.append(delta.text)
                    yield TokenChunk(round_index, turn, decision.chosen, delta.text)
                if delta.is_final:
                    break
            content = "".join(parts)

            session.append_entry(
                TranscriptEntry(
                    speaker=decision.chosen,
                    content=content,
                    round_index=round_index,
                    turn_within_round=turn,
                    timestamp=runtime.clock(),
                )
            )
            runtime.selector_history.append(ProviderMessage(agents.display_name(decision.chosen), content))
            yield MessageEnd(round_index, turn, decision.chosen, content)
            previous = decision.chosen
        yield RoundComplete(round_index)
    except ProviderError as exc:
        logger.warning("round %s aborted: %s", round_index, exc)
        yield RoundError(round_index, code=_error_code(exc), detail=str(exc))
    finally:
        if previous is not None:
            runtime.last_round_final_speaker = previous
        runtime.selector_history.clear()
        runtime.round_active = False
