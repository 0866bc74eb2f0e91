from __future__ import annotations

import numpy as np
import pytest

from crewload.errors import ConfigError
from crewload.session import engine as se
from crewload.session import events as ev
from crewload.session.engine import ProtocolViolation, SessionConfig, SessionEngine

# Compact timeline used throughout: set [0,2000), break = 500 ms workload
# window + 500 ms approval window, three sets per task.
FAST = dict(
    set_duration_s=2.0,
    isa_window_s=0.5,
    approval_window_s=0.5,
    object_dwell_s=0.8,
    abnormal_rate=20.0,
    normal_rate=10.0,
    seed=42,
)

SET_MS = 2000
BREAK_MS = 1000


def run_to_completion(engine: SessionEngine) -> list:
    events = engine.start()
    while not engine.finished:
        events += engine.advance(engine.next_tick_ms())
    return events


def types_of(events) -> list[str]:
    return [e.type for e in events]


class TestTaskFlags:
    def test_table_matches_experiment_design(self):
        matrix = {
            "A": (True, False, False, False),
            "B": (True, False, False, True),
            "C": (False, True, False, True),
            "D": (False, True, False, False),
            "E": (False, False, True, True),
            "F": (False, False, True, False),
            "G": (False, True, True, True),
            "H": (False, True, True, False),
        }
        for kind, (fixed, isa, prediction, approval) in matrix.items():
            flags = se.task_flags(kind)
            assert (flags.fixed, flags.isa, flags.prediction, flags.approval) == (
                fixed, isa, prediction, approval,
            )

    def test_unknown_kind_rejected(self):
        with pytest.raises(ConfigError):
            se.task_flags("Z")

    def test_strategy_mapping(self):
        from crewload.allocator import Strategy

        assert se.strategy_for(se.task_flags("A")) is Strategy.FIXED_EQUAL
        assert se.strategy_for(se.task_flags("B")) is Strategy.FIXED_NEGOTIATED
        assert se.strategy_for(se.task_flags("D")) is Strategy.POLICY_SUBJECTIVE
        assert se.strategy_for(se.task_flags("F")) is Strategy.POLICY_OBJECTIVE
        assert se.strategy_for(se.task_flags("G")) is Strategy.POLICY_FUSED


class TestConfigValidation:
    def test_durations_positive(self):
        with pytest.raises(ConfigError):
            SessionConfig(set_duration_s=0)
        with pytest.raises(ConfigError):
            SessionConfig(isa_window_s=-1)

    def test_rates_nonnegative(self):
        with pytest.raises(ConfigError):
            SessionConfig(abnormal_rate=-1)

    def test_view_bounds_checked(self):
        with pytest.raises(ConfigError):
            SessionConfig(n_operators=2, total_views=6, min_views=4)

    def test_empty_plan_rejected(self):
        with pytest.raises(ConfigError):
            SessionConfig(task_plan=())

    def test_lowercase_kinds_accepted(self):
        assert SessionConfig(task_plan=("g", "a")).task_plan == ("G", "A")


class TestSchedule:
    def test_same_seed_identical_log(self, model):
        config = SessionConfig(task_plan=("G",), **FAST)
        a = SessionEngine(config, model)
        b = SessionEngine(config, model)
        la = [e.to_json() for e in run_to_completion(a)]
        lb = [e.to_json() for e in run_to_completion(b)]
        assert la == lb

    def test_zero_rates_no_spawns(self, model):
        config = SessionConfig(
            task_plan=("A",), **{**FAST, "abnormal_rate": 0.0, "normal_rate": 0.0}
        )
        events = run_to_completion(SessionEngine(config, model))
        assert ev.OBJECT_SPAWN not in types_of(events)

    def test_poisson_spawn_rate(self, model):
        # expected abnormal spawns per draw: rate * duration * views / 60
        rate, duration, views = 6.0, 2.0, 6
        lam = rate * duration * views / 60.0
        config_kw = {**FAST, "abnormal_rate": rate, "normal_rate": 0.0,
                     "set_duration_s": duration}
        total = 0
        draws = 1000
        for seed in range(draws):
            engine = SessionEngine(
                SessionConfig(task_plan=("A",), sets_per_task=1, **{**config_kw, "seed": seed}),
                model,
            )
            total += sum(len(v) for v in engine._spawns.values())
        mean = total / draws
        sigma = np.sqrt(lam / draws)
        assert abs(mean - lam) < 3 * sigma

    def test_objects_never_outlive_their_set(self, model):
        config = SessionConfig(task_plan=("A",), **FAST)
        events = run_to_completion(SessionEngine(config, model))
        live: set[str] = set()
        for event in events:
            if event.type == ev.OBJECT_SPAWN:
                live.add(event.data["object"])
            elif event.type == ev.OBJECT_EXPIRE:
                live.discard(event.data["object"])
            elif event.type == ev.SET_END:
                assert not live


class TestTimeline:
    def test_phase_sequence_single_task(self, model):
        config = SessionConfig(task_plan=("A",), **FAST)
        events = run_to_completion(SessionEngine(config, model))
        kinds = [t for t in types_of(events) if t in (ev.SET_START, ev.SET_END, ev.TASK_END,
                                                      ev.SESSION_START, ev.SESSION_END)]
        assert kinds == [
            ev.SESSION_START,
            ev.SET_START, ev.SET_END,
            ev.SET_START, ev.SET_END,
            ev.SET_START, ev.SET_END,
            ev.TASK_END, ev.SESSION_END,
        ]

    def test_set_boundaries_at_expected_times(self, model):
        config = SessionConfig(task_plan=("A",), **FAST)
        events = run_to_completion(SessionEngine(config, model))
        starts = [e.t for e in events if e.type == ev.SET_START]
        ends = [e.t for e in events if e.type == ev.SET_END]
        assert starts == [0, SET_MS + BREAK_MS, 2 * (SET_MS + BREAK_MS)]
        assert ends == [SET_MS, SET_MS + (SET_MS + BREAK_MS), SET_MS + 2 * (SET_MS + BREAK_MS)]

    def test_fixed_task_break_has_no_prompts(self, model):
        config = SessionConfig(task_plan=("A",), **FAST)
        events = run_to_completion(SessionEngine(config, model))
        kinds = set(types_of(events))
        assert ev.ISA_PROMPT not in kinds
        assert ev.APPROVAL_PROMPT not in kinds
        assert ev.REALLOCATION_APPLIED not in kinds
        for event in events:
            if event.type == ev.SET_START:
                assert event.data["assignment"] == [3, 3]

    def test_negotiated_task_uses_frozen_split_without_prompts(self, model):
        config = SessionConfig(task_plan=("B",), **FAST)
        events = run_to_completion(SessionEngine(config, model))
        kinds = set(types_of(events))
        assert ev.ISA_PROMPT not in kinds and ev.APPROVAL_PROMPT not in kinds
        assignments = [e.data["assignment"] for e in events if e.type == ev.SET_START]
        assert len({tuple(a) for a in assignments}) == 1  # frozen for the task

    def test_adaptive_task_without_approval_reallocates_directly(self, model):
        config = SessionConfig(task_plan=("H",), **FAST)
        events = run_to_completion(SessionEngine(config, model))
        kinds = types_of(events)
        assert kinds.count(ev.REALLOCATION_APPLIED) == 2  # one per break
        assert ev.APPROVAL_PROMPT not in kinds
        assert kinds.count(ev.ISA_PROMPT) == 4  # 2 operators x 2 breaks

    def test_isa_timeout_defaults_to_previous_then_zero(self, model):
        config = SessionConfig(task_plan=("D",), **FAST)
        engine = SessionEngine(config, model)
        engine.start()
        engine.advance(SET_MS)  # set 1 over, prompts out
        # no responses: let the window lapse
        engine.advance(SET_MS + 500)
        responses = [e for e in engine.events if e.type == ev.ISA_RESPONSE]
        assert len(responses) == 2
        assert all(r.data["timed_out"] and r.data["score"] == 0 for r in responses)
        # answer in the second break, operator 0 only
        engine.advance(2 * SET_MS + BREAK_MS)  # set 2 over
        engine.submit_isa(0, -2, 2 * SET_MS + BREAK_MS + 100)
        engine.advance(2 * SET_MS + BREAK_MS + 500)
        responses = [e for e in engine.events if e.type == ev.ISA_RESPONSE][2:]
        by_op = {r.data["operator"]: r.data for r in responses}
        assert by_op[0]["score"] == -2 and not by_op[0]["timed_out"]
        assert by_op[1]["score"] == 0 and by_op[1]["timed_out"]

    def test_isa_response_updates_subjective_channel(self, model):
        config = SessionConfig(task_plan=("D",), **FAST)
        engine = SessionEngine(config, model)
        engine.start()
        engine.advance(SET_MS)
        engine.submit_isa(0, 2, SET_MS + 100)
        assert engine.s_subj[0] == 1.0


class TestApprovalFlow:
    def drive_to_first_approval(self, model, scores=(-1, 2)):
        # operator 0 mildly under the optimum, operator 1 far over it:
        # the lookahead shifts a view to operator 0, who must then approve
        config = SessionConfig(task_plan=("G",), **FAST)
        engine = SessionEngine(config, model)
        engine.start()
        engine.advance(SET_MS)
        engine.submit_isa(0, scores[0], SET_MS + 50)
        engine.submit_isa(1, scores[1], SET_MS + 60)
        engine.advance(SET_MS + 500)  # workload window closes; proposal built
        return engine

    def test_gainers_receive_approval_prompt(self, model):
        engine = self.drive_to_first_approval(model)
        prompts = [e for e in engine.events if e.type == ev.APPROVAL_PROMPT]
        assert prompts, "asymmetric reports must trigger a reallocation proposal"
        for prompt in prompts:
            operator = prompt.data["operator"]
            assert prompt.data["proposed"][operator] > prompt.data["current"][operator]

    def test_rejection_keeps_assignment(self, model):
        engine = self.drive_to_first_approval(model)
        before = tuple(engine.assignment)
        prompts = [e for e in engine.events if e.type == ev.APPROVAL_PROMPT]
        for prompt in prompts:
            engine.submit_approval(prompt.data["operator"], False, SET_MS + 600)
        engine.advance(SET_MS + BREAK_MS)
        realloc = [e for e in engine.events if e.type == ev.REALLOCATION_APPLIED][-1]
        assert realloc.data["accepted"] is False
        assert tuple(realloc.data["assignment"]) == before
        assert engine.assignment == before

    def test_timeout_rejects(self, model):
        engine = self.drive_to_first_approval(model)
        before = tuple(engine.assignment)
        engine.advance(SET_MS + BREAK_MS)  # let the approval window lapse
        decisions = [e for e in engine.events if e.type == ev.APPROVAL_DECISION]
        assert decisions and all(d.data["timed_out"] and not d.data["accept"] for d in decisions)
        assert engine.assignment == before

    def test_acceptance_applies_proposal(self, model):
        engine = self.drive_to_first_approval(model)
        prompts = [e for e in engine.events if e.type == ev.APPROVAL_PROMPT]
        proposed = tuple(prompts[0].data["proposed"])
        for prompt in prompts:
            engine.submit_approval(prompt.data["operator"], True, SET_MS + 600)
        engine.advance(SET_MS + BREAK_MS)
        assert engine.assignment == proposed
        next_set = [e for e in engine.events if e.type == ev.SET_START][-1]
        assert tuple(next_set.data["assignment"]) == proposed


class TestClicks:
    def start_with_objects(self, model, seed=42):
        config = SessionConfig(task_plan=("A",), **{**FAST, "seed": seed})
        engine = SessionEngine(config, model)
        engine.start()
        return engine

    def find_spawn(self, engine, kind):
        while True:
            tick = engine.next_tick_ms()
            assert tick is not None, f"no {kind} object spawned this session"
            new = engine.advance(tick)
            for event in new:
                if event.type == ev.OBJECT_SPAWN and event.data["kind"] == kind:
                    if event.data["object"] in engine._live:
                        return event

    def owner_of(self, engine, view):
        for operator, views in enumerate(engine._partition()):
            if view in views:
                return operator
        raise AssertionError(f"view {view} unassigned")

    def test_abnormal_click_scores_plus_one(self, model):
        engine = self.start_with_objects(model)
        spawn = self.find_spawn(engine, "abnormal")
        view = spawn.data["view"]
        operator = self.owner_of(engine, view)
        click = engine.handle_click(operator, view, spawn.t + 1)
        assert click.data["outcome"] == ev.HIT
        score = engine.events[-1]
        assert score.type == ev.SCORE_UPDATE
        assert score.data["delta"] == 1
        assert engine.ledger.team_total == 1
        assert engine.ledger.per_operator[operator] == 1

    def test_normal_click_costs_three(self, model):
        engine = self.start_with_objects(model)
        spawn = self.find_spawn(engine, "normal")
        view = spawn.data["view"]
        # make sure no abnormal object shares the view right now (it would
        # take precedence); if one does, consume it first
        operator = self.owner_of(engine, view)
        while any(v == view and k == "abnormal" for v, k in engine._live.values()):
            engine.handle_click(operator, view, spawn.t + 1)
        click = engine.handle_click(operator, view, spawn.t + 2)
        assert click.data["outcome"] == ev.PENALTY
        assert engine.events[-1].data["delta"] == -3

    def test_empty_view_click_is_logged_miss(self, model):
        config = SessionConfig(
            task_plan=("A",), **{**FAST, "abnormal_rate": 0.0, "normal_rate": 0.0}
        )
        engine = SessionEngine(config, model)
        engine.start()
        before_total = engine.ledger.team_total
        click = engine.handle_click(0, 0, 100)
        assert click.data["outcome"] == ev.MISS
        assert engine.ledger.team_total == before_total
        assert engine.events[-1] is click  # no score event follows

    def test_unassigned_view_rejected(self, model):
        engine = self.start_with_objects(model)
        engine.advance(10)
        views_of_1 = engine._partition()[1]
        click = engine.handle_click(0, views_of_1[0], 20)
        assert click.data["outcome"] == ev.REJECTED
        assert engine.ledger.team_total == 0

    def test_click_outside_set_rejected(self, model):
        engine = self.start_with_objects(model)
        engine.advance(SET_MS + 10)  # break
        click = engine.handle_click(0, 0, SET_MS + 20)
        assert click.data["outcome"] == ev.REJECTED

    def test_score_conservation(self, model):
        engine = self.start_with_objects(model, seed=7)
        rng = np.random.default_rng(0)
        while not engine.finished:
            tick = engine.next_tick_ms()
            engine.advance(tick)
            if engine.phase == se.PHASE_IN_SET and rng.random() < 0.5:
                view = int(rng.integers(engine.config.total_views))
                operator = self.owner_of(engine, view)
                engine.handle_click(operator, view, tick + 1)
        hits = sum(1 for e in engine.events
                   if e.type == ev.CLICK and e.data["outcome"] == ev.HIT)
        penalties = sum(1 for e in engine.events
                        if e.type == ev.CLICK and e.data["outcome"] == ev.PENALTY)
        assert engine.ledger.team_total == hits - 3 * penalties
        assert sum(engine.ledger.per_operator) == engine.ledger.team_total
        assert sum(engine.ledger.per_set.values()) == engine.ledger.team_total


class TestProtocolViolations:
    def test_input_before_start(self, model):
        engine = SessionEngine(SessionConfig(task_plan=("A",), **FAST), model)
        with pytest.raises(ProtocolViolation):
            engine.handle_click(0, 0, 0)

    def test_double_start(self, model):
        engine = SessionEngine(SessionConfig(task_plan=("A",), **FAST), model)
        engine.start()
        with pytest.raises(ProtocolViolation):
            engine.start()

    def test_isa_without_prompt(self, model):
        engine = SessionEngine(SessionConfig(task_plan=("G",), **FAST), model)
        engine.start()
        with pytest.raises(ProtocolViolation):
            engine.submit_isa(0, 1, 100)  # still inside set 1

    def test_approval_without_prompt(self, model):
        engine = SessionEngine(SessionConfig(task_plan=("G",), **FAST), model)
        engine.start()
        with pytest.raises(ProtocolViolation):
            engine.submit_approval(0, True, 100)

    def test_unknown_operator(self, model):
        engine = SessionEngine(SessionConfig(task_plan=("A",), **FAST), model)
        engine.start()
        with pytest.raises(ProtocolViolation):
            engine.handle_click(5, 0, 10)

    def test_late_isa_rejected(self, model):
        engine = SessionEngine(SessionConfig(task_plan=("D",), **FAST), model)
        engine.start()
        engine.advance(SET_MS)
        with pytest.raises(ProtocolViolation):
            engine.submit_isa(0, 1, SET_MS + 800)  # window closed at +500


class TestSnapshotAndSurveys:
    def test_snapshot_fields(self, model):
        engine = SessionEngine(SessionConfig(task_plan=("G",), **FAST), model)
        engine.start()
        engine.advance(100)
        snap = engine.snapshot()
        assert snap["schema"] == ev.SCHEMA_VERSION
        assert snap["phase"] == se.PHASE_IN_SET
        assert snap["assignment"] == [3, 3]
        assert snap["views"] == [[0, 1, 2], [3, 4, 5]]
        assert snap["n_operators"] == 2

    def test_survey_logged_verbatim(self, model):
        engine = SessionEngine(SessionConfig(task_plan=("A",), **FAST), model)
        engine.start()
        payload = {"valence": 7, "arousal": 3, "notes": "fine"}
        engine.submit_survey(1, "affect-grid", payload, 500)
        event = engine.events[-1]
        assert event.type == ev.SURVEY_SUBMITTED
        assert event.data["kind"] == "affect-grid"
        assert event.data["payload"] == payload

    def test_multi_task_plan_full_run(self, model):
        config = SessionConfig(task_plan=("A", "G", "H"), **FAST)
        events = run_to_completion(SessionEngine(config, model))
        kinds = types_of(events)
        assert kinds.count(ev.SET_START) == 9
        assert kinds.count(ev.TASK_END) == 3
        assert kinds[-1] == ev.SESSION_END
        # every task restarts from the equal split
        first_sets = [e for e in events if e.type == ev.SET_START and e.data["set"] == 1]
        assert all(e.data["assignment"] == [3, 3] for e in first_sets)
