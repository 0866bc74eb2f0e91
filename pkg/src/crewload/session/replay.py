"""Deterministic reconstruction of a session from its JSONL event log.

Replay rebuilds the score ledger and view assignment purely from logged
events, enforcing the session invariants as it goes: monotonic timestamps,
strict set alternation, prompts only inside breaks, responses only against
open prompts, score deltas in {+1, -3} with a consistent running total,
clicks consistent with the live-object state, and view-conserving
reallocations. Violations raise :class:`ReplayError` with the offending
line number.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Iterable

from . import events as ev
from .events import Event


class ReplayError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass
class ReplayResult:
    team_total: int = 0
    per_operator: dict[int, int] = field(default_factory=dict)
    per_set: dict[tuple[int, int], int] = field(default_factory=dict)
    final_assignment: tuple[int, ...] = ()
    clicks: dict[str, int] = field(default_factory=dict)
    sets_seen: int = 0
    events: int = 0
    duration_ms: int = 0


def replay_lines(lines: Iterable[str]) -> ReplayResult:
    events = []
    for number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ReplayError(number, f"malformed JSON: {exc}") from exc
        try:
            events.append((number, Event.from_dict(doc)))
        except ValueError as exc:
            raise ReplayError(number, str(exc)) from exc
    return replay_events(events)


def replay_file(path: str) -> ReplayResult:
    with open(path, "r", encoding="utf-8") as fh:
        return replay_lines(fh)


def replay_events(numbered: list[tuple[int, Event]]) -> ReplayResult:
    if not numbered:
        return ReplayResult()

    first_line, first = numbered[0]
    if first.type != ev.SESSION_START:
        raise ReplayError(first_line, f"log must open with session_start, got {first.type}")
    header = first.data
    n_operators = int(header.get("n_operators", 0))
    total_views = int(header.get("total_views", 0))
    min_views = header.get("min_views")
    max_views = header.get("max_views")
    sets_per_task = header.get("sets_per_task")
    if n_operators < 1 or total_views < 1:
        raise ReplayError(first_line, "session_start missing operator/view counts")

    result = ReplayResult(
        per_operator={op: 0 for op in range(n_operators)},
        clicks={ev.HIT: 0, ev.PENALTY: 0, ev.MISS: 0, ev.REJECTED: 0},
    )
    last_t = first.t
    in_set = False
    ended = False
    current_task = -1
    current_set = 0
    sets_in_task = 0
    assignment: tuple[int, ...] = ()
    partition: list[list[int]] = []
    live: dict[str, tuple[int, str]] = {}
    open_isa: set[int] = set()
    open_approval: set[int] = set()

    def check_assignment(line: int, values: Any) -> tuple[int, ...]:
        counts = tuple(int(v) for v in values)
        if len(counts) != n_operators:
            raise ReplayError(line, f"assignment {counts} has wrong arity")
        if sum(counts) != total_views:
            raise ReplayError(line, f"assignment {counts} does not conserve {total_views} views")
        if min_views is not None and max_views is not None:
            for c in counts:
                if not int(min_views) <= c <= int(max_views):
                    raise ReplayError(line, f"assignment {counts} violates [{min_views}, {max_views}]")
        return counts

    for line, event in numbered[1:]:
        if ended and event.type != ev.SURVEY_SUBMITTED:
            # post-task surveys may trail the session; nothing else may
            raise ReplayError(line, "event after session_end")
        if event.type not in ev.ALL_TYPES:
            raise ReplayError(line, f"unknown event type {event.type!r}")
        if event.t < last_t:
            raise ReplayError(line, f"timestamp {event.t} decreases (previous {last_t})")
        last_t = event.t
        data = event.data

        if event.type == ev.SESSION_START:
            raise ReplayError(line, "duplicate session_start")

        elif event.type == ev.SET_START:
            if in_set:
                raise ReplayError(line, "set_start while a set is already open")
            if open_isa or open_approval:
                raise ReplayError(line, "set started with unresolved prompts")
            task = int(data["task"])
            if task != current_task:
                if current_task >= 0 and sets_per_task is not None and sets_in_task != int(sets_per_task):
                    raise ReplayError(line, f"task {current_task} had {sets_in_task} sets")
                current_task = task
                sets_in_task = 0
            in_set = True
            sets_in_task += 1
            current_set = int(data["set"])
            result.sets_seen += 1
            assignment = check_assignment(line, data["assignment"])
            views = data.get("views")
            partition = [list(map(int, block)) for block in views] if views else []
            live.clear()

        elif event.type == ev.SET_END:
            if not in_set:
                raise ReplayError(line, "set_end without open set")
            if live:
                raise ReplayError(line, f"{len(live)} objects still live at set_end")
            in_set = False

        elif event.type == ev.OBJECT_SPAWN:
            if not in_set:
                raise ReplayError(line, "object spawned outside a set")
            oid = str(data["object"])
            if oid in live:
                raise ReplayError(line, f"object {oid} spawned twice")
            kind = data.get("kind")
            if kind not in ("abnormal", "normal"):
                raise ReplayError(line, f"bad object kind {kind!r}")
            live[oid] = (int(data["view"]), kind)

        elif event.type == ev.OBJECT_EXPIRE:
            oid = str(data["object"])
            if oid not in live:
                raise ReplayError(line, f"object {oid} expired but was not live")
            del live[oid]

        elif event.type == ev.CLICK:
            outcome = data.get("outcome")
            if outcome not in result.clicks:
                raise ReplayError(line, f"bad click outcome {outcome!r}")
            result.clicks[outcome] += 1
            operator = int(data["operator"])
            if operator not in result.per_operator:
                raise ReplayError(line, f"unknown operator {operator}")
            if outcome in (ev.HIT, ev.PENALTY):
                if not in_set:
                    raise ReplayError(line, "scoring click outside a set")
                oid = str(data["object"])
                if oid not in live:
                    raise ReplayError(line, f"click consumed {oid} which is not live")
                view, kind = live[oid]
                if view != int(data["view"]):
                    raise ReplayError(line, f"click view mismatch for {oid}")
                expected = ev.HIT if kind == "abnormal" else ev.PENALTY
                if outcome != expected:
                    raise ReplayError(line, f"{kind} object scored as {outcome}")
                if partition and view not in partition[operator]:
                    raise ReplayError(line, f"operator {operator} scored on unassigned view {view}")
                del live[oid]
                delta = ev.SCORE_HIT if outcome == ev.HIT else ev.SCORE_PENALTY
                result.team_total += delta
                result.per_operator[operator] += delta
                key = (current_task, current_set)
                result.per_set[key] = result.per_set.get(key, 0) + delta

        elif event.type == ev.SCORE_UPDATE:
            delta = data.get("delta")
            if delta not in (ev.SCORE_HIT, ev.SCORE_PENALTY):
                raise ReplayError(line, f"score delta {delta!r} not in {{+1, -3}}")
            if int(data.get("team_total", 0)) != result.team_total:
                raise ReplayError(
                    line,
                    f"running team total {result.team_total} != logged {data.get('team_total')}",
                )

        elif event.type == ev.ISA_PROMPT:
            if in_set:
                raise ReplayError(line, "workload prompt during an active set")
            operator = int(data["operator"])
            if operator in open_isa:
                raise ReplayError(line, f"duplicate workload prompt for operator {operator}")
            open_isa.add(operator)

        elif event.type == ev.ISA_RESPONSE:
            operator = int(data["operator"])
            if operator not in open_isa:
                raise ReplayError(line, f"workload response without open prompt (operator {operator})")
            open_isa.discard(operator)
            if int(data["score"]) not in (-2, -1, 0, 1, 2):
                raise ReplayError(line, f"score {data['score']} outside five-point scale")

        elif event.type == ev.APPROVAL_PROMPT:
            if in_set:
                raise ReplayError(line, "approval prompt during an active set")
            operator = int(data["operator"])
            if operator in open_approval:
                raise ReplayError(line, f"duplicate approval prompt for operator {operator}")
            open_approval.add(operator)

        elif event.type == ev.APPROVAL_DECISION:
            operator = int(data["operator"])
            if operator not in open_approval:
                raise ReplayError(line, f"approval decision without open prompt (operator {operator})")
            open_approval.discard(operator)

        elif event.type == ev.REALLOCATION_APPLIED:
            if in_set:
                raise ReplayError(line, "reallocation during an active set")
            assignment = check_assignment(line, data["assignment"])

        elif event.type == ev.TASK_END:
            if in_set:
                raise ReplayError(line, "task_end during an active set")

        elif event.type == ev.SESSION_END:
            if in_set:
                raise ReplayError(line, "session_end during an active set")
            logged = data.get("team_total")
            if logged is not None and int(logged) != result.team_total:
                raise ReplayError(
                    line, f"final team total {result.team_total} != logged {logged}"
                )
            ended = True

    result.final_assignment = assignment
    result.events = len(numbered)
    result.duration_ms = last_t
    return result
