"""Append-oriented session persistence: one JSONL record stream per session,
flushed after every entry so a crash loses at most the in-flight agent turn."""

from __future__ import annotations

import json
import os
from dataclasses import asdict
from datetime import datetime
from pathlib import Path

from .agents import AgentSet, AgentSpec
from .profile import UserProfile, profile_to_dict
from .session import Session, TranscriptEntry


class StoreError(Exception):
    pass


class SessionNotFoundError(StoreError):
    pass


class StoreCorruptionError(StoreError):
    """A record stream could not be decoded; names the file and line."""

    def __init__(self, path: Path, line_no: int, reason: str):
        self.path = path
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"{path}:{line_no}: {reason}")


class SessionStore:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, session_id: str) -> Path:
        if not session_id or session_id.startswith(".") or any(c in session_id for c in "/\\\0"):
            raise StoreError(f"invalid session id {session_id!r}")
        return self.root / f"{session_id}.jsonl"

    def has(self, session_id: str) -> bool:
        return self._path(session_id).exists()

    def list_sessions(self) -> list[str]:
        return sorted(p.stem for p in self.root.glob("*.jsonl"))

    def create(self, session: Session) -> None:
        """Write the header record. Existing record streams are never
        silently overwritten."""
        path = self._path(session.session_id)
        if path.exists():
            raise StoreError(f"record stream already exists: {path}")
        header = {
            "type": "session",
            "session_id": session.session_id,
            "created_at": session.created_at.isoformat(),
            "profile": profile_to_dict(session.profile),
            "agents": [asdict(spec) for spec in session.agent_set.agents],
        }
        with open(path, "x", encoding="utf-8") as f:
            f.write(json.dumps(header, ensure_ascii=False) + "\n")
            f.flush()
            os.fsync(f.fileno())

    def append_entry(self, session_id: str, entry: TranscriptEntry) -> None:
        path = self._path(session_id)
        if not path.exists():
            raise SessionNotFoundError(f"no record stream for session {session_id!r}")
        record = {
            "type": "entry",
            "speaker": entry.speaker,
            "content": entry.content,
            "round_index": entry.round_index,
            "turn_within_round": entry.turn_within_round,
            "timestamp": entry.timestamp.isoformat(),
        }
        with open(path, "a", encoding="utf-8") as f:
            f.write(json.dumps(record, ensure_ascii=False) + "\n")
            f.flush()
            os.fsync(f.fileno())

    def persist(self, session: Session) -> None:
        """Write a whole session in one go (header plus every entry)."""
        self.create(session)
        for entry in session.transcript:
            self.append_entry(session.session_id, entry)

    def load(self, session_id: str) -> Session:
        """Rebuild a session from its record stream. Undecodable records fail
        loudly with the offending file and line; the stream is left untouched."""
        path = self._path(session_id)
        if not path.exists():
            raise SessionNotFoundError(f"no record stream for session {session_id!r}")
        session: Session | None = None
        with open(path, encoding="utf-8") as f:
            for line_no, line in enumerate(f, start=1):
                line = line.rstrip("\n")
                if not line:
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise StoreCorruptionError(path, line_no, f"undecodable record: {exc}") from exc
                try:
                    if line_no == 1:
                        session = self._session_from_header(record)
                    else:
                        if session is None or record.get("type") != "entry":
                            raise ValueError(f"unexpected record type {record.get('type')!r}")
                        session.append_entry(self._entry_from_record(record))
                except (KeyError, TypeError, ValueError) as exc:
                    raise StoreCorruptionError(path, line_no, str(exc)) from exc
        if session is None:
            raise StoreCorruptionError(path, 1, "empty record stream")
        return session

    @staticmethod
    def _session_from_header(record: dict) -> Session:
        if record.get("type") != "session":
            raise ValueError(f"expected a session header, got type {record.get('type')!r}")
        profile = UserProfile(
            experience=record["profile"]["experience"],
            location=record["profile"]["location"],
            month=int(record["profile"]["month"]),
            cultural_background=record["profile"].get("cultural_background", ""),
        )
        agents = AgentSet(tuple(AgentSpec(**spec) for spec in record["agents"]))
        created = datetime.fromisoformat(record["created_at"])
        return Session(
            session_id=record["session_id"],
            profile=profile,
            agent_set=agents,
            transcript=[],
            created_at=created,
            updated_at=created,
            round_counter=0,
        )

    @staticmethod
    def _entry_from_record(record: dict) -> TranscriptEntry:
        return TranscriptEntry(
            speaker=record["speaker"],
            content=record["content"],
            round_index=int(record["round_index"]),
            turn_within_round=int(record["turn_within_round"]),
            timestamp=datetime.fromisoformat(record["timestamp"]),
        )
