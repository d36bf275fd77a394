"""Wire protocol: newline-delimited JSON envelopes over byte streams.

The in-process Channel carries exactly the bytes a TCP binding would; the
Transcript records every byte the coordinator touches so tests can scan for
leaks (tokens, ratings, unmasked deltas).
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional


class Abort(Exception):
    """Round aborted (dropout after masking, missing school, protocol error)."""


class MessageType(str, Enum):
    REGISTER = "register"
    ROUND_START = "round_start"
    UPDATE = "update"
    ROUND_END = "round_end"
    ABORT = "abort"


@dataclass(frozen=True)
class FederationMessage:
    type: MessageType
    round: int
    school: str
    payload: dict[str, Any]

    def to_bytes(self) -> bytes:
        doc = {
            "type": self.type.value,
            "round": self.round,
            "school": self.school,
            "payload": self.payload,
        }
        return (json.dumps(doc, sort_keys=True) + "\n").encode("utf-8")

    @classmethod
    def from_bytes(cls, line: bytes) -> "FederationMessage":
        doc = json.loads(line.decode("utf-8"))
        return cls(
            type=MessageType(doc["type"]),
            round=int(doc["round"]),
            school=doc["school"],
            payload=doc["payload"],
        )


@dataclass
class Transcript:
    """Every raw byte observed on one side of the wire."""

    chunks: list[bytes] = field(default_factory=list)

    def record(self, data: bytes) -> None:
        self.chunks.append(data)

    def as_bytes(self) -> bytes:
        return b"".join(self.chunks)


class Channel:
    """Duplex in-process byte channel framing NDJSON envelopes.

    Messages pass through their serialized byte form in both directions, so
    the simulation exercises the exact wire format a socket would carry.
    """

    def __init__(self, transcript: Optional[Transcript] = None):
        self._to_coordinator: deque[bytes] = deque()
        self._to_school: deque[bytes] = deque()
        self._transcript = transcript

    def send_to_coordinator(self, msg: FederationMessage) -> None:
        data = msg.to_bytes()
        if self._transcript is not None:
            self._transcript.record(data)
        self._to_coordinator.append(data)

    def send_to_school(self, msg: FederationMessage) -> None:
        self._to_school.append(msg.to_bytes())

    def recv_at_coordinator(self) -> Optional[FederationMessage]:
        if not self._to_coordinator:
            return None
        return FederationMessage.from_bytes(self._to_coordinator.popleft())

    def recv_at_school(self) -> Optional[FederationMessage]:
        if not self._to_school:
            return None
        return FederationMessage.from_bytes(self._to_school.popleft())
