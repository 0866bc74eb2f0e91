"""Deterministic live-session state machine.

A session runs an ordered plan of tasks; each task is ``sets_per_task``
timed monitoring sets separated by fixed-length breaks. During a set,
synthetic objects (abnormal/normal) spawn in camera views on a pre-drawn
Poisson schedule and operators click views to find the abnormal ones
(+1 per find, -3 per normal object, misses score nothing). During a break,
depending on the task kind, operators report workload on the five-point
scale (10 s window, unanswered prompts fall back to the previous report),
the objective channel is refreshed from a pluggable workload predictor,
a reallocation is proposed, and - for approval-style tasks - the operators
who would receive extra views must consent (10 s window, timeout rejects,
rejection leaves the assignment unchanged).

The engine is virtual-time: callers push the clock forward with
``advance(now_ms)`` and inject operator input stamped with the
server-authoritative time. Everything random is pre-drawn from the session
seed at construction, so identical seeds give identical schedules and -
given identical operator input - identical event logs. Each engine instance
is single-threaded; run concurrent sessions as independent instances.

Task kinds follow the eight-condition experiment design:

    kind   workload    break collects          approval
    A      fixed equal     -                       -
    B      fixed agreed    -                   consensus at task start
    C      adaptive    subjective report           yes
    D      adaptive    subjective report           -
    E      adaptive    predicted workload          yes
    F      adaptive    predicted workload          -
    G      adaptive    both                        yes
    H      adaptive    both                        -

Fixed-workload tasks (A, B) keep their split for the whole task and their
breaks are pure rest; the "agreed" split of B is computed once at task
start by the one-step-lookahead proposer, standing in for a human
discussion. Every task starts from the equal split.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field
from typing import Any, Protocol

import numpy as np

from ..allocator import Strategy, StrategyRunner, greedy_propose
from ..env import EnvConfig, TeamState, equal_split, team_perf_of
from ..errors import ConfigError
from ..perfmodel import PerformanceModel, clamp01, isa_score, isa_to_workload
from . import events as ev
from .events import Event


@dataclass(frozen=True)
class TaskFlags:
    kind: str
    fixed: bool
    isa: bool
    prediction: bool
    approval: bool


_TASK_TABLE = {
    "A": TaskFlags("A", True, False, False, False),
    "B": TaskFlags("B", True, False, False, True),
    "C": TaskFlags("C", False, True, False, True),
    "D": TaskFlags("D", False, True, False, False),
    "E": TaskFlags("E", False, False, True, True),
    "F": TaskFlags("F", False, False, True, False),
    "G": TaskFlags("G", False, True, True, True),
    "H": TaskFlags("H", False, True, True, False),
}


def task_flags(kind: str) -> TaskFlags:
    try:
        return _TASK_TABLE[kind.upper()]
    except KeyError as exc:
        raise ConfigError(f"unknown task kind {kind!r}; valid: A..H") from exc


def strategy_for(flags: TaskFlags) -> Strategy:
    if flags.fixed:
        return Strategy.FIXED_NEGOTIATED if flags.approval else Strategy.FIXED_EQUAL
    if flags.isa and flags.prediction:
        return Strategy.POLICY_FUSED
    if flags.isa:
        return Strategy.POLICY_SUBJECTIVE
    return Strategy.POLICY_OBJECTIVE


@dataclass(frozen=True)
class SessionConfig:
    task_plan: tuple[str, ...] = ("G",)
    set_duration_s: float = 100.0
    isa_window_s: float = 10.0
    approval_window_s: float = 10.0
    sets_per_task: int = 3
    n_operators: int = 2
    total_views: int = 6
    min_views: int = 1
    max_views: int | None = None
    abnormal_rate: float = 4.0  # spawns per view per minute
    normal_rate: float = 2.0
    object_dwell_s: float = 4.0
    kappa: float = 0.1
    predictor_noise: float = 0.02
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.task_plan:
            raise ConfigError("task_plan must not be empty")
        object.__setattr__(self, "task_plan", tuple(t.upper() for t in self.task_plan))
        for kind in self.task_plan:
            task_flags(kind)
        for name in ("set_duration_s", "isa_window_s", "approval_window_s", "object_dwell_s"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be > 0")
        for name in ("abnormal_rate", "normal_rate", "predictor_noise"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.sets_per_task < 1:
            raise ConfigError("sets_per_task must be >= 1")
        # Delegate view-bound validation; also fills the max_views default.
        env = self.env_config()
        object.__setattr__(self, "max_views", env.max_views)

    def env_config(self) -> EnvConfig:
        try:
            return EnvConfig(
                n_operators=self.n_operators,
                total_views=self.total_views,
                min_views=self.min_views,
                max_views=self.max_views,
                sets_per_mission=self.sets_per_task,
                kappa=self.kappa,
                seed=self.seed,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def break_ms(self) -> int:
        return round(1000 * (self.isa_window_s + self.approval_window_s))

    @property
    def set_ms(self) -> int:
        return round(1000 * self.set_duration_s)


class WorkloadPredictor(Protocol):
    """Objective-channel source.

    ``predict`` is called once per operator during every break of a
    prediction-enabled task and returns a workload level in [0, 1]. The
    default simulation below can be swapped for a live predictor that
    answers the same call (e.g. a client polling an external inference
    service).
    """

    def predict(self, operator: int, views: int, t_ms: int) -> float: ...


class SimulatedPredictor:
    """Stands in for a live workload predictor.

    Predicted workload rises linearly with the operator's share of views
    around mid-scale (0.5 at the equal split) plus a little Gaussian noise,
    mirroring the assumption that more views means more workload.
    """

    def __init__(self, config: SessionConfig, rng: np.random.Generator):
        self._kappa = config.kappa
        self._noise = config.predictor_noise
        self._equal_share = config.total_views / config.n_operators
        self._rng = rng

    def predict(self, operator: int, views: int, t_ms: int) -> float:
        noise = self._rng.normal(0.0, self._noise) if self._noise > 0 else 0.0
        return clamp01(0.5 + self._kappa * (views - self._equal_share) + noise)


class ProtocolViolation(RuntimeError):
    """Operator input that the session state machine cannot accept."""


@dataclass
class ScoreLedger:
    """Running scores; only the team total is shown to operators mid-task."""

    team_total: int = 0
    per_operator: list[int] = field(default_factory=list)
    per_set: dict[tuple[int, int], int] = field(default_factory=dict)

    def add(self, operator: int, delta: int, task: int, set_index: int) -> None:
        self.team_total += delta
        self.per_operator[operator] += delta
        key = (task, set_index)
        self.per_set[key] = self.per_set.get(key, 0) + delta


# Tick kinds, in processing order at equal timestamps.
_EXPIRE, _SET_END, _ISA_DEADLINE, _BREAK_END, _TASK_END, _SET_START, _SPAWN, _SESSION_END = range(8)

PHASE_CREATED = "created"
PHASE_IN_SET = "in_set"
PHASE_BREAK_ISA = "break_isa"
PHASE_BREAK_APPROVAL = "break_approval"
PHASE_BETWEEN_TASKS = "between_tasks"
PHASE_ENDED = "ended"


@dataclass(frozen=True)
class _SpawnPlan:
    t: int
    view: int
    object_id: str
    kind: str
    expire_t: int


class SessionEngine:
    """One session: pre-drawn schedule, virtual clock, event log, ledger."""

    def __init__(
        self,
        config: SessionConfig,
        model: PerformanceModel | None = None,
        *,
        policy=None,
        predictor: WorkloadPredictor | None = None,
    ):
        self.config = config
        self.model = model if model is not None else PerformanceModel()
        self.policy = policy
        self.env_config = config.env_config()

        ss = np.random.SeedSequence(config.seed)
        schedule_rng, predictor_rng = (np.random.default_rng(c) for c in ss.spawn(2))
        self.predictor: WorkloadPredictor = (
            predictor if predictor is not None else SimulatedPredictor(config, predictor_rng)
        )

        self.phase = PHASE_CREATED
        self.events: list[Event] = []
        self.ledger = ScoreLedger(per_operator=[0] * config.n_operators)
        self.assignment: tuple[int, ...] = equal_split(config.total_views, config.n_operators)
        self.s_subj = [0.5] * config.n_operators
        self.s_obj = [0.5] * config.n_operators
        self._last_isa: list[int | None] = [None] * config.n_operators

        self.task_index = -1
        self.set_number = 0  # 1-based within the task
        self._now = 0
        self._live: dict[str, tuple[int, str]] = {}  # object_id -> (view, kind)
        self._isa_open: set[int] = set()
        self._approval_open: set[int] = set()
        self._approval_votes: dict[int, bool] = {}
        self._pending_proposal = None
        self._runner: StrategyRunner | None = None

        self._spawns = self._draw_schedule(schedule_rng)
        self._timeline: list[tuple[int, int, int, Any]] = []
        self._seq = itertools.count()
        self._build_timeline()

    # ------------------------------------------------------------------
    # schedule construction

    def _set_start_time(self, task: int, set_index: int) -> int:
        cfg = self.config
        task_span = cfg.sets_per_task * cfg.set_ms + cfg.sets_per_task * cfg.break_ms
        return task * task_span + (set_index - 1) * (cfg.set_ms + cfg.break_ms)

    def _draw_schedule(self, rng: np.random.Generator) -> dict[tuple[int, int], list[_SpawnPlan]]:
        """Pre-draw every object spawn for the whole session.

        Per view and kind, spawn counts are Poisson(rate * duration / 60)
        with times uniform over the set; objects dwell a fixed time and
        never outlive their set.
        """
        cfg = self.config
        dwell = round(1000 * cfg.object_dwell_s)
        schedule: dict[tuple[int, int], list[_SpawnPlan]] = {}
        counter = itertools.count()
        for task in range(len(cfg.task_plan)):
            for set_index in range(1, cfg.sets_per_task + 1):
                start = self._set_start_time(task, set_index)
                end = start + cfg.set_ms
                plans: list[_SpawnPlan] = []
                for view in range(cfg.total_views):
                    for kind, rate in (("abnormal", cfg.abnormal_rate), ("normal", cfg.normal_rate)):
                        count = rng.poisson(rate * cfg.set_duration_s / 60.0)
                        for offset in np.sort(rng.uniform(0, cfg.set_ms, size=count)):
                            t = start + int(offset)
                            plans.append(
                                _SpawnPlan(
                                    t=t,
                                    view=view,
                                    object_id=f"ob{next(counter)}",
                                    kind=kind,
                                    expire_t=min(t + dwell, end),
                                )
                            )
                plans.sort(key=lambda p: p.t)
                schedule[(task, set_index)] = plans
        return schedule

    def _push(self, t: int, kind: int, payload: Any = None) -> None:
        heapq.heappush(self._timeline, (t, kind, next(self._seq), payload))

    def _build_timeline(self) -> None:
        cfg = self.config
        for task in range(len(cfg.task_plan)):
            for set_index in range(1, cfg.sets_per_task + 1):
                start = self._set_start_time(task, set_index)
                end = start + cfg.set_ms
                self._push(start, _SET_START, (task, set_index))
                for plan in self._spawns[(task, set_index)]:
                    self._push(plan.t, _SPAWN, plan)
                    self._push(plan.expire_t, _EXPIRE, plan)
                self._push(end, _SET_END, (task, set_index))
                if set_index < cfg.sets_per_task:
                    self._push(end + round(1000 * cfg.isa_window_s), _ISA_DEADLINE, (task, set_index))
                    self._push(end + cfg.break_ms, _BREAK_END, (task, set_index))
                else:
                    self._push(end, _TASK_END, task)
        last_end = self._set_start_time(len(cfg.task_plan) - 1, cfg.sets_per_task) + cfg.set_ms
        self._push(last_end + cfg.break_ms, _SESSION_END, None)

    # ------------------------------------------------------------------
    # clock and event plumbing

    def _emit(self, etype: str, t: int, **data: Any) -> Event:
        event = Event(etype, t, data)
        self.events.append(event)
        return event

    def start(self) -> list[Event]:
        """Move from created to running; the first set starts at t=0."""
        if self.phase != PHASE_CREATED:
            raise ProtocolViolation("session already started")
        cfg = self.config
        mark = len(self.events)
        self.phase = PHASE_BETWEEN_TASKS
        self._emit(
            ev.SESSION_START,
            0,
            schema=ev.SCHEMA_VERSION,
            seed=cfg.seed,
            n_operators=cfg.n_operators,
            total_views=cfg.total_views,
            min_views=cfg.min_views,
            max_views=cfg.max_views,
            task_plan=list(cfg.task_plan),
            sets_per_task=cfg.sets_per_task,
        )
        self._drain(0)
        return self.events[mark:]

    def advance(self, now_ms: int) -> list[Event]:
        """Process every scheduled transition up to ``now_ms`` and return the
        newly emitted events (injected input uses the same log)."""
        if self.phase == PHASE_CREATED:
            raise ProtocolViolation("session not started")
        mark = len(self.events)
        self._drain(now_ms)
        return self.events[mark:]

    def _drain(self, now_ms: int) -> None:
        while self._timeline and self._timeline[0][0] <= now_ms and self.phase != PHASE_ENDED:
            t, kind, _, payload = heapq.heappop(self._timeline)
            self._now = max(self._now, t)
            self._handle_tick(t, kind, payload)
        self._now = max(self._now, now_ms)

    def _handle_tick(self, t: int, kind: int, payload: Any) -> None:
        if kind == _SET_START:
            self._on_set_start(t, *payload)
        elif kind == _SPAWN:
            plan: _SpawnPlan = payload
            self._live[plan.object_id] = (plan.view, plan.kind)
            self._emit(ev.OBJECT_SPAWN, t, view=plan.view, object=plan.object_id, kind=plan.kind)
        elif kind == _EXPIRE:
            plan = payload
            if plan.object_id in self._live:
                del self._live[plan.object_id]
                self._emit(ev.OBJECT_EXPIRE, t, view=plan.view, object=plan.object_id)
        elif kind == _SET_END:
            self._on_set_end(t, *payload)
        elif kind == _ISA_DEADLINE:
            self._on_isa_deadline(t)
        elif kind == _BREAK_END:
            self._on_break_end(t)
        elif kind == _TASK_END:
            self._emit(ev.TASK_END, t, task=payload, kind=self.config.task_plan[payload])
            self.phase = PHASE_BETWEEN_TASKS
        elif kind == _SESSION_END:
            self._emit(ev.SESSION_END, t, team_total=self.ledger.team_total)
            self.phase = PHASE_ENDED

    # ------------------------------------------------------------------
    # phase handlers

    def _current_flags(self) -> TaskFlags:
        return task_flags(self.config.task_plan[self.task_index])

    def _team_state(self) -> TeamState:
        state = TeamState(
            s_subj=np.array(self.s_subj, dtype=np.float64),
            s_obj=np.array(self.s_obj, dtype=np.float64),
            views=np.array(self.assignment, dtype=np.int64),
        )
        state.team_perf = team_perf_of(state, self.model)
        return state

    def _partition(self) -> list[list[int]]:
        """Contiguous view-id blocks per operator, in operator order."""
        out = []
        cursor = 0
        for count in self.assignment:
            out.append(list(range(cursor, cursor + count)))
            cursor += count
        return out

    def _on_set_start(self, t: int, task: int, set_index: int) -> None:
        cfg = self.config
        if set_index == 1:
            self.task_index = task
            flags = self._current_flags()
            self.assignment = equal_split(cfg.total_views, cfg.n_operators)
            self._runner = StrategyRunner(
                strategy_for(flags), self.env_config, self.model, policy=self.policy
            )
            self._runner.start_episode(self._team_state())
            if flags.fixed and flags.approval:
                # Agreed fixed split: freeze the lookahead proposal for the task.
                self.assignment = self._runner.propose(self._team_state()).proposed
        self.set_number = set_index
        self.phase = PHASE_IN_SET
        self._emit(
            ev.SET_START,
            t,
            task=task,
            kind=cfg.task_plan[task],
            set=set_index,
            assignment=list(self.assignment),
            views=self._partition(),
        )

    def _on_set_end(self, t: int, task: int, set_index: int) -> None:
        self._emit(ev.SET_END, t, task=task, set=set_index)
        if set_index < self.config.sets_per_task:
            self.phase = PHASE_BREAK_ISA
            flags = self._current_flags()
            if not flags.fixed and flags.isa:
                deadline = t + round(1000 * self.config.isa_window_s)
                for operator in range(self.config.n_operators):
                    self._isa_open.add(operator)
                    self._emit(ev.ISA_PROMPT, t, operator=operator, deadline=deadline)

    def _on_isa_deadline(self, t: int) -> None:
        flags = self._current_flags()
        cfg = self.config
        for operator in sorted(self._isa_open):
            score = self._last_isa[operator] if self._last_isa[operator] is not None else 0
            self._apply_isa(operator, score, t, timed_out=True)
        self._isa_open.clear()

        self.phase = PHASE_BREAK_APPROVAL
        if flags.fixed:
            return
        if flags.prediction:
            for operator in range(cfg.n_operators):
                self.s_obj[operator] = clamp01(
                    self.predictor.predict(operator, self.assignment[operator], t)
                )
        assert self._runner is not None
        proposal = self._runner.propose(self._team_state())
        self._pending_proposal = proposal
        if flags.approval and proposal.proposed != proposal.current:
            deadline = t + round(1000 * cfg.approval_window_s)
            gainers = [
                op
                for op in range(cfg.n_operators)
                if proposal.proposed[op] > proposal.current[op]
            ]
            for operator in gainers:
                self._approval_open.add(operator)
                self._emit(
                    ev.APPROVAL_PROMPT,
                    t,
                    operator=operator,
                    current=list(proposal.current),
                    proposed=list(proposal.proposed),
                    deadline=deadline,
                )

    def _on_break_end(self, t: int) -> None:
        flags = self._current_flags()
        for operator in sorted(self._approval_open):
            self._approval_votes[operator] = False
            self._emit(
                ev.APPROVAL_DECISION, t, operator=operator, accept=False, timed_out=True
            )
        self._approval_open.clear()

        if not flags.fixed and self._pending_proposal is not None:
            proposal = self._pending_proposal
            accepted = all(self._approval_votes.values()) if self._approval_votes else True
            final = proposal.proposed if accepted else proposal.current
            self.assignment = tuple(final)
            self._emit(
                ev.REALLOCATION_APPLIED,
                t,
                assignment=list(final),
                accepted=accepted,
            )
        self._pending_proposal = None
        self._approval_votes = {}

    # ------------------------------------------------------------------
    # operator input

    def _stamp(self, t: int) -> int:
        return max(int(t), self._now)

    def _operator_of_view(self, view: int) -> int | None:
        for operator, views in enumerate(self._partition()):
            if view in views:
                return operator
        return None

    def handle_click(self, operator: int, view: int, t: int) -> Event:
        """Score a click: abnormal object -> +1, normal -> -3, empty view -> 0.

        Clicks outside an active set or on a view not assigned to the
        operator are rejected but still logged.
        """
        self.advance(t)
        t = self._stamp(t)
        self._check_operator(operator)
        if self.phase != PHASE_IN_SET or not 0 <= view < self.config.total_views:
            return self._emit(
                ev.CLICK, t, operator=operator, view=view, object=None, outcome=ev.REJECTED
            )
        if self._operator_of_view(view) != operator:
            return self._emit(
                ev.CLICK, t, operator=operator, view=view, object=None, outcome=ev.REJECTED
            )
        target_id, target_kind = None, None
        for object_id, (obj_view, obj_kind) in self._live.items():
            if obj_view == view and obj_kind == "abnormal":
                target_id, target_kind = object_id, obj_kind
                break
        if target_id is None:
            for object_id, (obj_view, obj_kind) in self._live.items():
                if obj_view == view:
                    target_id, target_kind = object_id, obj_kind
                    break
        if target_id is None:
            return self._emit(
                ev.CLICK, t, operator=operator, view=view, object=None, outcome=ev.MISS
            )
        del self._live[target_id]
        outcome = ev.HIT if target_kind == "abnormal" else ev.PENALTY
        delta = ev.SCORE_HIT if outcome == ev.HIT else ev.SCORE_PENALTY
        click = self._emit(
            ev.CLICK, t, operator=operator, view=view, object=target_id, outcome=outcome
        )
        self.ledger.add(operator, delta, self.task_index, self.set_number)
        self._emit(
            ev.SCORE_UPDATE, t, operator=operator, delta=delta, team_total=self.ledger.team_total
        )
        return click

    def _apply_isa(self, operator: int, score: int, t: int, timed_out: bool) -> None:
        score = isa_score(score)
        self._last_isa[operator] = score
        self.s_subj[operator] = isa_to_workload(score)
        self._emit(ev.ISA_RESPONSE, t, operator=operator, score=score, timed_out=timed_out)

    def submit_isa(self, operator: int, score: int, t: int) -> None:
        self.advance(t)
        self._check_operator(operator)
        if operator not in self._isa_open:
            raise ProtocolViolation(f"no open workload prompt for operator {operator}")
        self._isa_open.discard(operator)
        self._apply_isa(operator, score, self._stamp(t), timed_out=False)

    def submit_approval(self, operator: int, accept: bool, t: int) -> None:
        self.advance(t)
        self._check_operator(operator)
        if operator not in self._approval_open:
            raise ProtocolViolation(f"no open approval prompt for operator {operator}")
        self._approval_open.discard(operator)
        self._approval_votes[operator] = bool(accept)
        self._emit(
            ev.APPROVAL_DECISION,
            self._stamp(t),
            operator=operator,
            accept=bool(accept),
            timed_out=False,
        )

    def submit_survey(self, operator: int, kind: str, payload: Any, t: int) -> None:
        """Store a survey response verbatim (any time after session start)."""
        self.advance(t)
        self._check_operator(operator)
        self._emit(
            ev.SURVEY_SUBMITTED, self._stamp(t), operator=operator, kind=kind, payload=payload
        )

    def _check_operator(self, operator: int) -> None:
        if not 0 <= operator < self.config.n_operators:
            raise ProtocolViolation(f"unknown operator {operator}")

    # ------------------------------------------------------------------
    # introspection

    @property
    def finished(self) -> bool:
        return self.phase == PHASE_ENDED

    def next_tick_ms(self) -> int | None:
        return self._timeline[0][0] if self._timeline else None

    def snapshot(self) -> dict[str, Any]:
        """Current public state (what a reconnecting console needs)."""
        return {
            "schema": ev.SCHEMA_VERSION,
            "phase": self.phase,
            "t": self._now,
            "task": self.task_index,
            "task_kind": self.config.task_plan[self.task_index] if self.task_index >= 0 else None,
            "set": self.set_number,
            "assignment": list(self.assignment),
            "views": self._partition(),
            "team_total": self.ledger.team_total,
            "live_objects": [
                {"object": oid, "view": view, "kind": kind}
                for oid, (view, kind) in sorted(self._live.items())
            ],
            "open_prompts": {
                "isa": sorted(self._isa_open),
                "approval": sorted(self._approval_open),
            },
            "task_plan": list(self.config.task_plan),
            "n_operators": self.config.n_operators,
        }
