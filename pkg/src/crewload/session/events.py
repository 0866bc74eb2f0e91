"""Session event records.

Every state change in a live session is one immutable event with a
millisecond timestamp (since session start). The same records back the
append-only JSONL log, the replay checker, and the per-operator WebSocket
stream, so the wire format and the persisted format never diverge.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

SCHEMA_VERSION = 1

# Event type tags.
SESSION_START = "session_start"
SET_START = "set_start"
OBJECT_SPAWN = "object_spawn"
OBJECT_EXPIRE = "object_expire"
CLICK = "click"
SCORE_UPDATE = "score_update"
ISA_PROMPT = "isa_prompt"
ISA_RESPONSE = "isa_response"
APPROVAL_PROMPT = "approval_prompt"
APPROVAL_DECISION = "approval_decision"
REALLOCATION_APPLIED = "reallocation_applied"
SET_END = "set_end"
SURVEY_SUBMITTED = "survey_submitted"
TASK_END = "task_end"
SESSION_END = "session_end"

ALL_TYPES = frozenset(
    {
        SESSION_START, SET_START, OBJECT_SPAWN, OBJECT_EXPIRE, CLICK, SCORE_UPDATE,
        ISA_PROMPT, ISA_RESPONSE, APPROVAL_PROMPT, APPROVAL_DECISION,
        REALLOCATION_APPLIED, SET_END, SURVEY_SUBMITTED, TASK_END, SESSION_END,
    }
)

# Click outcomes.
HIT = "hit"          # abnormal object found: +1
PENALTY = "penalty"  # normal object clicked: -3
MISS = "miss"        # nothing live in the view: no score change
REJECTED = "rejected"  # view not assigned to the clicking operator

SCORE_HIT = 1
SCORE_PENALTY = -3


@dataclass(frozen=True)
class Event:
    type: str
    t: int
    data: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {"type": self.type, "t": self.t, **self.data}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "Event":
        doc = dict(doc)
        try:
            etype = doc.pop("type")
            t = doc.pop("t")
        except KeyError as exc:
            raise ValueError(f"event missing required field {exc}") from exc
        if not isinstance(t, int) or isinstance(t, bool):
            raise ValueError(f"event timestamp must be an integer, got {t!r}")
        return cls(type=str(etype), t=t, data=doc)
