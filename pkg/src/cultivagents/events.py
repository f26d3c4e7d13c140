"""Typed round events and their two encodings: rich event-log records for the
offline checker, and the exact client-facing wire frames."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Union

from .session import Session


@dataclass(frozen=True)
class RoundStarted:
    round_index: int
    history_len: int


@dataclass(frozen=True)
class SpeakerSelected:
    round_index: int
    turn: int
    agent_id: str
    eligible: tuple[str, ...]
    source: str  # "model" | "fallback"
    attempts: int


@dataclass(frozen=True)
class MessageStart:
    round_index: int
    turn: int
    agent_id: str


@dataclass(frozen=True)
class TokenChunk:
    round_index: int
    turn: int
    agent_id: str
    text: str


@dataclass(frozen=True)
class MessageEnd:
    round_index: int
    turn: int
    agent_id: str
    content: str


@dataclass(frozen=True)
class RoundComplete:
    round_index: int


@dataclass(frozen=True)
class RoundError:
    round_index: int
    code: str
    detail: str


RoundEvent = Union[
    RoundStarted, SpeakerSelected, MessageStart, TokenChunk, MessageEnd, RoundComplete, RoundError
]


def event_record(event: RoundEvent) -> dict:
    """Event-log form: one JSON object per event, richer than the wire frame
    (eligible sets, decision provenance, message content) so invariants can be
    checked offline."""
    if isinstance(event, RoundStarted):
        return {"type": "round_started", "round": event.round_index, "history_len": event.history_len}
    if isinstance(event, SpeakerSelected):
        return {
            "type": "speaker_selected",
            "round": event.round_index,
            "turn": event.turn,
            "agent_id": event.agent_id,
            "eligible": list(event.eligible),
            "source": event.source,
            "attempts": event.attempts,
        }
    if isinstance(event, MessageStart):
        return {"type": "message_start", "round": event.round_index, "turn": event.turn, "agent_id": event.agent_id}
    if isinstance(event, TokenChunk):
        return {
            "type": "token_delta",
            "round": event.round_index,
            "turn": event.turn,
            "agent_id": event.agent_id,
            "text": event.text,
        }
    if isinstance(event, MessageEnd):
        return {
            "type": "message_end",
            "round": event.round_index,
            "turn": event.turn,
            "agent_id": event.agent_id,
            "content": event.content,
        }
    if isinstance(event, RoundComplete):
        return {"type": "round_complete", "round": event.round_index}
    if isinstance(event, RoundError):
        return {"type": "round_error", "round": event.round_index, "code": event.code, "detail": event.detail}
    raise TypeError(f"unknown event {event!r}")


def wire_frame(event: RoundEvent) -> dict:
    """Client-facing frame. Field names and shapes are a compatibility contract;
    do not change them without versioning the protocol."""
    if isinstance(event, RoundStarted):
        return {"type": "round_started", "round": event.round_index}
    if isinstance(event, SpeakerSelected):
        return {"type": "speaker_selected", "agent_id": event.agent_id, "turn": event.turn}
    if isinstance(event, MessageStart):
        return {"type": "message_start", "agent_id": event.agent_id, "turn": event.turn}
    if isinstance(event, TokenChunk):
        return {"type": "token_delta", "text": event.text}
    if isinstance(event, MessageEnd):
        return {"type": "message_end"}
    if isinstance(event, RoundComplete):
        return {"type": "round_complete"}
    if isinstance(event, RoundError):
        return {"type": "error", "code": event.code, "detail": event.detail}
    raise TypeError(f"unknown event {event!r}")


def session_created_frame(session: Session) -> dict:
    return {
        "type": "session_created",
        "session_id": session.session_id,
        "agents": [
            {"id": spec.id, "display_name": spec.display_name, "color": spec.color_tag}
            for spec in session.agent_set.agents
        ],
    }


def export_payload_frame(text: str) -> dict:
    return {"type": "export_payload", "text": text}


def error_frame(code: str, detail: str) -> dict:
    return {"type": "error", "code": code, "detail": detail}


def frame_json(frame: dict) -> str:
    """One newline-free JSON text per frame; compact separators, UTF-8 verbatim."""
    return json.dumps(frame, separators=(",", ":"), ensure_ascii=False)
