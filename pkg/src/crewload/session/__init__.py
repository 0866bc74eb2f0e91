"""Live monitoring-session engine, event log, replay, and HTTP/WS service."""

from .engine import SessionConfig, SessionEngine, TaskFlags, task_flags
from .events import SCHEMA_VERSION, Event
from .replay import ReplayError, ReplayResult, replay_events, replay_lines

__all__ = [
    "SCHEMA_VERSION",
    "Event",
    "ReplayError",
    "ReplayResult",
    "SessionConfig",
    "SessionEngine",
    "TaskFlags",
    "replay_events",
    "replay_lines",
    "task_flags",
]
