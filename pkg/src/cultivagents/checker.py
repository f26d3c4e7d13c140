"""Offline invariant checker over event logs: the same predicates the round
coordinator and service promise, assertable from a recorded run."""

from __future__ import annotations

from typing import Sequence

from .session import TranscriptEntry


def check_event_log(
    events: Sequence[dict],
    *,
    round_size: int,
    full_agent_order: Sequence[str],
    transcript: Sequence[TranscriptEntry] | None = None,
    exclude_across_rounds: bool = False,
) -> list[str]:
    """Check a run's event-log records. Returns one message per violation,
    each prefixed with the violated invariant's name; empty means clean.

    Checked invariants: round length, within-round exclusion, history reset,
    eligibility soundness, event ordering (sequential turns, contiguous
    deltas), and, when a transcript is supplied, wire/transcript agreement.
    """
    violations: list[str] = []
    full_order = list(full_agent_order)

    rounds: dict[int, list[dict]] = {}
    for record in events:
        rnd = record.get("round")
        if rnd is None:
            violations.append(f"event-shape: record without a round: {record}")
            continue
        rounds.setdefault(rnd, []).append(record)

    previous_round_last_speaker: str | None = None
    for rnd in sorted(rounds):
        records = rounds[rnd]
        ends = [r for r in records if r["type"] == "message_end"]
        completed = any(r["type"] == "round_complete" for r in records)
        errored = any(r["type"] == "round_error" for r in records)

        if records[0]["type"] != "round_started":
            violations.append(f"ordering: round {rnd} does not begin with round_started")
        else:
            if records[0].get("history_len") != 1:
                violations.append(
                    f"history-reset: round {rnd} started with selector history length "
                    f"{records[0].get('history_len')} (expected 1)"
                )

        if completed and errored:
            violations.append(f"ordering: round {rnd} has both round_complete and round_error")
        if completed and len(ends) != round_size:
            violations.append(
                f"round-length: round {rnd} completed with {len(ends)} agent messages (expected {round_size})"
            )
        if errored and len(ends) >= round_size:
            violations.append(f"round-length: round {rnd} errored but still has {len(ends)} agent messages")

        speakers = [r["agent_id"] for r in ends]
        for a, b in zip(speakers, speakers[1:]):
            if a == b:
                violations.append(f"exclusion: round {rnd} has consecutive messages from {a!r}")
        if exclude_across_rounds and speakers and previous_round_last_speaker == speakers[0]:
            violations.append(
                f"exclusion: round {rnd} opens with {speakers[0]!r}, the previous round's last speaker"
            )
        if speakers:
            previous_round_last_speaker = speakers[-1]

        for record in records:
            if record["type"] != "speaker_selected":
                continue
            eligible = record.get("eligible") or []
            if record["agent_id"] not in eligible:
                violations.append(
                    f"eligibility: round {rnd} turn {record.get('turn')} selected {record['agent_id']!r} "
                    f"outside eligible set {eligible}"
                )
            if record.get("turn") == 1 and not exclude_across_rounds and list(eligible) != full_order:
                violations.append(
                    f"eligibility: round {rnd} turn 1 eligible set {eligible} != full agent set {full_order}"
                )
            if record.get("source") == "fallback" and record.get("attempts", 0) < 2:
                violations.append(
                    f"selection: round {rnd} turn {record.get('turn')} fell back after "
                    f"{record.get('attempts')} attempt(s) (expected 2)"
                )

        violations.extend(_check_turn_ordering(rnd, records, round_size))

    if transcript is not None:
        violations.extend(_check_transcript_agreement(events, transcript))
    return violations


def _check_turn_ordering(rnd: int, records: Sequence[dict], round_size: int) -> list[str]:
    """Per-turn frame sequence: speaker_selected, message_start, token_delta*,
    message_end; turns strictly sequential, deltas never interleaved."""
    violations = []
    expected_turn = 1
    phase = "idle"  # idle -> selected -> streaming (per turn)
    for record in records:
        kind = record["type"]
        if kind in ("round_started", "round_complete", "round_error"):
            if kind != "round_started" and phase == "streaming":
                violations.append(f"ordering: round {rnd} closed inside an open message")
            continue
        turn = record.get("turn")
        if kind == "speaker_selected":
            if phase != "idle" or turn != expected_turn:
                violations.append(
                    f"ordering: round {rnd} speaker_selected for turn {turn} arrived out of order"
                )
            phase = "selected"
        elif kind == "message_start":
            if phase != "selected" or turn != expected_turn:
                violations.append(f"ordering: round {rnd} message_start for turn {turn} arrived out of order")
            phase = "streaming"
        elif kind == "token_delta":
            if phase != "streaming" or turn != expected_turn:
                violations.append(f"ordering: round {rnd} token_delta for turn {turn} outside its message")
        elif kind == "message_end":
            if phase != "streaming" or turn != expected_turn:
                violations.append(f"ordering: round {rnd} message_end for turn {turn} arrived out of order")
            phase = "idle"
            expected_turn += 1
    if expected_turn > round_size + 1:
        violations.append(f"ordering: round {rnd} ran {expected_turn - 1} turns (round size {round_size})")
    return violations


def _check_transcript_agreement(events: Sequence[dict], transcript: Sequence[TranscriptEntry]) -> list[str]:
    """message_end events must match persisted agent entries one-to-one, in
    order; every round_started must match a persisted user entry."""
    violations = []
    event_msgs = [
        (r["round"], r["turn"], r["agent_id"], r["content"])
        for r in events
        if r["type"] == "message_end"
    ]
    entry_msgs = [
        (e.round_index, e.turn_within_round, e.speaker, e.content)
        for e in transcript
        if e.turn_within_round > 0
    ]
    if event_msgs != entry_msgs:
        violations.append(
            f"wire-transcript: {len(event_msgs)} streamed agent messages do not match "
            f"{len(entry_msgs)} persisted agent entries"
        )
    event_rounds = [r["round"] for r in events if r["type"] == "round_started"]
    user_rounds = [e.round_index for e in transcript if e.turn_within_round == 0]
    if event_rounds != user_rounds:
        violations.append(
            f"wire-transcript: started rounds {event_rounds} do not match persisted user entries {user_rounds}"
        )
    return violations
