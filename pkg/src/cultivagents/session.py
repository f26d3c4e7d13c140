"""Session state: the ordered transcript, session creation, and plain-text export."""

from __future__ import annotations

import secrets
from dataclasses import dataclass, field
from datetime import datetime, timezone

from .agents import AgentSet
from .profile import UserProfile, serialize_profile

USER_SPEAKER = "user"
EXPORT_TITLE = "CultivAgents conversation transcript"


def utc_now() -> datetime:
    return datetime.now(timezone.utc)


@dataclass(frozen=True)
class TranscriptEntry:
    """One persisted message. User entries carry turn 0; agent entries 1..k."""

    speaker: str
    content: str
    round_index: int
    turn_within_round: int
    timestamp: datetime

    def __post_init__(self):
        if self.round_index < 1:
            raise ValueError("round_index starts at 1")
        if (self.speaker == USER_SPEAKER) != (self.turn_within_round == 0):
            raise ValueError("user entries carry turn 0, agent entries carry turn >= 1")


@dataclass
class Session:
    """One conversation: profile, agent set, and the durable ordered transcript."""

    session_id: str
    profile: UserProfile
    agent_set: AgentSet
    transcript: list[TranscriptEntry] = field(default_factory=list)
    created_at: datetime = field(default_factory=utc_now)
    updated_at: datetime = field(default_factory=utc_now)
    round_counter: int = 0

    def append_entry(self, entry: TranscriptEntry) -> None:
        """Append in strict (round, turn) order; keeps round_counter at the
        highest round index present."""
        if self.transcript:
            last = self.transcript[-1]
            if (entry.round_index, entry.turn_within_round) <= (last.round_index, last.turn_within_round):
                raise ValueError(
                    f"transcript order violated: ({entry.round_index}, {entry.turn_within_round}) "
                    f"after ({last.round_index}, {last.turn_within_round})"
                )
        self.transcript.append(entry)
        self.round_counter = max(self.round_counter, entry.round_index)
        self.updated_at = entry.timestamp


def create_session(
    profile: UserProfile,
    agent_set: AgentSet,
    *,
    session_id: str | None = None,
    created_at: datetime | None = None,
) -> Session:
    """Fresh session with an empty transcript and an unguessable id."""
    now = created_at or utc_now()
    return Session(
        session_id=session_id or secrets.token_hex(16),
        profile=profile,
        agent_set=agent_set,
        transcript=[],
        created_at=now,
        updated_at=now,
        round_counter=0,
    )


def export_transcript(session: Session) -> str:
    """Deterministic plain-text export: a header block (session id, creation
    date, the profile fields), then one block per transcript entry in order,
    blocks separated by blank lines."""
    header = (
        f"{EXPORT_TITLE}\n"
        f"Session: {session.session_id}\n"
        f"Created: {session.created_at.date().isoformat()}\n"
        f"{serialize_profile(session.profile)}"
    )
    blocks = [header]
    for entry in session.transcript:
        name = "You" if entry.speaker == USER_SPEAKER else session.agent_set.display_name(entry.speaker)
        blocks.append(f"[{name}] (round {entry.round_index})\n{entry.content}")
    return "\n\n".join(blocks) + "\n"
