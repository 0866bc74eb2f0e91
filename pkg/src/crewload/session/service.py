"""HTTP + WebSocket service around the session engine.

One FastAPI app hosts any number of independent sessions. Per session the
server keeps the engine behind an asyncio lock, appends every event to a
JSONL log file, and pushes each operator a filtered stream over their
WebSocket. The server clock (event-loop monotonic time since session start)
is authoritative; client timestamps are ignored.

Wire protocol (JSON, ``schema`` announced in the hello message):

  server -> client
    hello              {schema, operator, state}
    set_start          {task, kind, set, assignment, views}
    object_spawn       {view, object, kind}        (only for your views)
    object_expire      {view, object}              (only for your views)
    click              {operator, view, object, outcome}   (echo of yours)
    score_update       {team_total [, operator, delta for the clicker]}
    isa_prompt         {operator, deadline}
    approval_prompt    {operator, current, proposed, deadline}
    isa_response / approval_decision                (echo of yours)
    reallocation_applied {assignment, accepted}
    set_end / task_end / session_start / session_end
    error              {message}

  client -> server
    click              {view}
    isa_response       {score}
    approval_decision  {accept}

All messages carry the server timestamp ``t`` in ms since session start.
"""

from __future__ import annotations

import asyncio
import secrets
from contextlib import asynccontextmanager
from pathlib import Path
from typing import Any

from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from fastapi.responses import PlainTextResponse
from fastapi.staticfiles import StaticFiles

from .. import __version__
from ..perfmodel import PerformanceModel
from ..ppo import PolicyParams
from . import events as ev
from .engine import ProtocolViolation, SessionConfig, SessionEngine
from .events import SCHEMA_VERSION, Event

TICK_SECONDS = 0.02


def _partition_of(assignment: list[int]) -> list[list[int]]:
    blocks, cursor = [], 0
    for count in assignment:
        blocks.append(list(range(cursor, cursor + count)))
        cursor += count
    return blocks


def route_event(event: Event, partition: list[list[int]], n_operators: int) -> dict[int, dict]:
    """Decide which operators receive an event, and in what form.

    Spawn/expire go only to the owner of the view; click echoes and prompt
    traffic go to their operator; score updates reach everyone but carry the
    delta only to the operator who clicked (others see the team total only,
    individual scores stay hidden during play). Survey submissions are not
    broadcast at all.
    """
    doc = event.to_dict()
    everyone = dict.fromkeys(range(n_operators), doc)
    if event.type in (ev.OBJECT_SPAWN, ev.OBJECT_EXPIRE):
        view = doc["view"]
        for operator, views in enumerate(partition):
            if view in views:
                return {operator: doc}
        return {}
    if event.type in (ev.CLICK, ev.ISA_PROMPT, ev.ISA_RESPONSE, ev.APPROVAL_PROMPT,
                      ev.APPROVAL_DECISION):
        return {int(doc["operator"]): doc}
    if event.type == ev.SCORE_UPDATE:
        out: dict[int, dict] = {}
        clicker = int(doc["operator"])
        for operator in range(n_operators):
            if operator == clicker:
                out[operator] = doc
            else:
                out[operator] = {"type": ev.SCORE_UPDATE, "t": doc["t"],
                                 "team_total": doc["team_total"]}
        return out
    if event.type == ev.SURVEY_SUBMITTED:
        return {}
    return everyone


class SessionHandle:
    """Server-side bookkeeping for one running session."""

    def __init__(self, session_id: str, engine: SessionEngine, log_path: Path):
        self.id = session_id
        self.engine = engine
        self.log_path = log_path
        self.log_file = log_path.open("a", encoding="utf-8")
        self.lock = asyncio.Lock()
        self.sockets: dict[int, WebSocket] = {}
        self.started = False
        self.t0: float | None = None
        self.ticker: asyncio.Task | None = None
        self.partition = _partition_of(list(engine.assignment))

    def now_ms(self) -> int:
        if self.t0 is None:
            return 0
        return max(0, int((asyncio.get_running_loop().time() - self.t0) * 1000))

    def log_events(self, events: list[Event]) -> None:
        for event in events:
            self.log_file.write(event.to_json() + "\n")
        self.log_file.flush()

    async def broadcast(self, events: list[Event]) -> None:
        n = self.engine.config.n_operators
        for event in events:
            if event.type in (ev.SET_START, ev.REALLOCATION_APPLIED):
                self.partition = _partition_of(list(event.data["assignment"]))
            for operator, doc in route_event(event, self.partition, n).items():
                socket = self.sockets.get(operator)
                if socket is not None:
                    try:
                        await socket.send_json(doc)
                    except Exception:
                        self.sockets.pop(operator, None)

    async def pump(self, events: list[Event]) -> None:
        self.log_events(events)
        await self.broadcast(events)

    def close(self) -> None:
        if self.ticker is not None:
            self.ticker.cancel()
        if not self.log_file.closed:
            self.log_file.flush()
            self.log_file.close()


def create_app(
    *,
    logs_dir: str | Path = "session-logs",
    model: PerformanceModel | None = None,
    policy: PolicyParams | None = None,
    default_config: SessionConfig | None = None,
    frontend_dir: str | Path | None = None,
) -> FastAPI:
    sessions: dict[str, SessionHandle] = {}

    @asynccontextmanager
    async def lifespan(_: FastAPI):
        yield
        for handle in sessions.values():
            handle.close()

    app = FastAPI(title="crewload session service", version=__version__, lifespan=lifespan)
    logs = Path(logs_dir)
    logs.mkdir(parents=True, exist_ok=True)
    perf_model = model if model is not None else PerformanceModel()
    base_config = default_config if default_config is not None else SessionConfig()
    app.state.sessions = sessions

    def get_handle(session_id: str) -> SessionHandle:
        handle = sessions.get(session_id)
        if handle is None:
            raise HTTPException(status_code=404, detail=f"no session {session_id}")
        return handle

    @app.get("/health")
    def health() -> dict[str, Any]:
        return {"service": "crewload", "version": __version__, "schema": SCHEMA_VERSION}

    @app.post("/sessions")
    def create_session(body: dict[str, Any] | None = None) -> dict[str, Any]:
        fields = dict(body or {})
        if "task_plan" in fields:
            fields["task_plan"] = tuple(fields["task_plan"])
        try:
            merged = {**_config_dict(base_config), **fields}
            config = SessionConfig(**merged)
        except (TypeError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        session_id = secrets.token_hex(4)
        engine = SessionEngine(config, perf_model, policy=policy)
        handle = SessionHandle(session_id, engine, logs / f"session-{session_id}.jsonl")
        sessions[session_id] = handle
        return {"id": session_id, "schema": SCHEMA_VERSION, "config": _config_dict(config)}

    @app.get("/sessions/{session_id}/state")
    async def session_state(session_id: str) -> dict[str, Any]:
        handle = get_handle(session_id)
        async with handle.lock:
            if handle.started and not handle.engine.finished:
                await handle.pump(handle.engine.advance(handle.now_ms()))
            snap = handle.engine.snapshot()
        snap["started"] = handle.started
        snap["connected"] = sorted(handle.sockets)
        return snap

    @app.get("/sessions/{session_id}/log")
    async def session_log(session_id: str) -> PlainTextResponse:
        handle = get_handle(session_id)
        async with handle.lock:
            handle.log_file.flush()
            text = handle.log_path.read_text(encoding="utf-8")
        return PlainTextResponse(text, media_type="application/x-ndjson")

    @app.post("/sessions/{session_id}/survey")
    async def submit_survey(session_id: str, body: dict[str, Any]) -> dict[str, Any]:
        handle = get_handle(session_id)
        try:
            operator = int(body["operator"])
            kind = str(body["kind"])
        except (KeyError, TypeError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=f"survey needs operator and kind: {exc}")
        async with handle.lock:
            try:
                handle.engine.submit_survey(operator, kind, body.get("payload"), handle.now_ms())
            except ProtocolViolation as exc:
                raise HTTPException(status_code=409, detail=str(exc)) from exc
            await handle.pump([handle.engine.events[-1]])
        return {"ok": True}

    async def ticker(handle: SessionHandle) -> None:
        try:
            while not handle.engine.finished:
                await asyncio.sleep(TICK_SECONDS)
                async with handle.lock:
                    events = handle.engine.advance(handle.now_ms())
                    if events:
                        await handle.pump(events)
        except asyncio.CancelledError:
            pass

    @app.websocket("/sessions/{session_id}/ws/{operator}")
    async def operator_socket(socket: WebSocket, session_id: str, operator: int) -> None:
        handle = sessions.get(session_id)
        if handle is None:
            await socket.close(code=4404)
            return
        n = handle.engine.config.n_operators
        if not 0 <= operator < n or operator in handle.sockets:
            await socket.close(code=4409)
            return
        await socket.accept()
        handle.sockets[operator] = socket
        async with handle.lock:
            snapshot = handle.engine.snapshot()
        await socket.send_json(
            {
                "type": "hello",
                "t": handle.now_ms(),
                "schema": SCHEMA_VERSION,
                "operator": operator,
                "state": snapshot,
            }
        )
        try:
            async with handle.lock:
                if not handle.started and len(handle.sockets) == n:
                    handle.started = True
                    handle.t0 = asyncio.get_running_loop().time()
                    await handle.pump(handle.engine.start())
                    handle.ticker = asyncio.create_task(ticker(handle))
            while True:
                message = await socket.receive_json()
                await _handle_client_message(handle, operator, message, socket)
        except WebSocketDisconnect:
            pass
        finally:
            if handle.sockets.get(operator) is socket:
                del handle.sockets[operator]

    async def _handle_client_message(
        handle: SessionHandle, operator: int, message: dict[str, Any], socket: WebSocket
    ) -> None:
        mtype = message.get("type")
        async with handle.lock:
            now = handle.now_ms()
            try:
                if not handle.started:
                    raise ProtocolViolation("session has not started")
                before = len(handle.engine.events)
                if mtype == "click":
                    handle.engine.handle_click(operator, int(message["view"]), now)
                elif mtype == "isa_response":
                    handle.engine.submit_isa(operator, int(message["score"]), now)
                elif mtype == "approval_decision":
                    handle.engine.submit_approval(operator, bool(message["accept"]), now)
                else:
                    raise ProtocolViolation(f"unknown message type {mtype!r}")
                await handle.pump(handle.engine.events[before:])
            except (ProtocolViolation, KeyError, TypeError, ValueError) as exc:
                await socket.send_json({"type": "error", "t": now, "message": str(exc)})

    if frontend_dir is not None and Path(frontend_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(frontend_dir), html=True), name="console")

    return app


def _config_dict(config: SessionConfig) -> dict[str, Any]:
    return {
        "task_plan": list(config.task_plan),
        "set_duration_s": config.set_duration_s,
        "isa_window_s": config.isa_window_s,
        "approval_window_s": config.approval_window_s,
        "sets_per_task": config.sets_per_task,
        "n_operators": config.n_operators,
        "total_views": config.total_views,
        "min_views": config.min_views,
        "max_views": config.max_views,
        "abnormal_rate": config.abnormal_rate,
        "normal_rate": config.normal_rate,
        "object_dwell_s": config.object_dwell_s,
        "kappa": config.kappa,
        "predictor_noise": config.predictor_noise,
        "seed": config.seed,
    }
