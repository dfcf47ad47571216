"""Wire messages between clients and the session service.

Transport-agnostic: the same message shapes travel over the WebSocket stream
and come back as HTTP response bodies. Every client submission produces an
ordered batch of server messages whose first element is always the ``delta``
acknowledging the event (it carries the server-assigned seq); dialog messages
(``needs_disambiguation``, ``clarification``) follow in the order the engine
raised them. Anything unprocessable produces exactly one ``error`` instead.
"""

from __future__ import annotations

from typing import Iterable

from .inference import PipelineNote
from .session import ApplyResult

__all__ = [
    "ProtocolError",
    "parse_client_message",
    "snapshot_message",
    "delta_message",
    "note_message",
    "error_message",
    "messages_from_apply",
]

#: error codes a client can rely on
BAD_REQUEST = "bad_request"
UNKNOWN_SESSION = "unknown_session"
CAPACITY = "capacity"


class ProtocolError(Exception):
    """A client message the service refuses; carries the wire error code."""

    def __init__(self, code: str, text: str):
        super().__init__(text)
        self.code = code
        self.text = text


def parse_client_message(raw) -> dict:
    """Validate the client envelope ``{"event": {...}}`` and return the raw
    event. The seq is the server's to assign; a client-supplied one is an
    error rather than something to silently overwrite."""
    if not isinstance(raw, dict):
        raise ProtocolError(BAD_REQUEST, "client message must be a JSON object")
    unknown = set(raw) - {"event"}
    if unknown:
        raise ProtocolError(BAD_REQUEST, f"unknown client message fields: {sorted(unknown)}")
    event = raw.get("event")
    if not isinstance(event, dict):
        raise ProtocolError(BAD_REQUEST, "client message needs an 'event' object")
    if "seq" in event:
        raise ProtocolError(BAD_REQUEST, "event seq is assigned by the server")
    return event


def snapshot_message(session_id: str, seq: int, state: dict) -> dict:
    return {"kind": "snapshot", "session_id": session_id, "seq": seq, "state": state}


def delta_message(session_id: str, result: ApplyResult) -> dict:
    return {
        "kind": "delta",
        "session_id": session_id,
        "seq": result.seq,
        "applied": result.applied,
        "delta": result.delta,
        "diagnostics": list(result.diagnostics),
    }


def note_message(session_id: str, seq: int, note: PipelineNote) -> dict | None:
    if note.kind == "needs_disambiguation":
        return {
            "kind": "needs_disambiguation",
            "session_id": session_id,
            "seq": seq,
            "proposal_id": note.proposal_id,
            "candidates": list(note.candidates),
            "prompt": note.text,
        }
    if note.kind == "clarification":
        return {
            "kind": "clarification",
            "session_id": session_id,
            "seq": seq,
            "text": note.text,
        }
    return None  # committed/dropped/expired ride inside the delta itself


def error_message(code: str, text: str, session_id: str | None = None) -> dict:
    msg = {"kind": "error", "code": code, "text": text}
    if session_id is not None:
        msg["session_id"] = session_id
    return msg


def messages_from_apply(session_id: str, result: ApplyResult) -> list[dict]:
    """The ordered server-message batch one applied event produces."""
    messages = [delta_message(session_id, result)]
    messages.extend(
        m
        for m in (note_message(session_id, result.seq, n) for n in result.notes)
        if m is not None
    )
    return messages


def note_messages(session_id: str, seq: int, notes: Iterable[PipelineNote]) -> list[dict]:
    return [m for m in (note_message(session_id, seq, n) for n in notes) if m is not None]
