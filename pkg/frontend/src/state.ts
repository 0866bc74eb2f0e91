// Console state: a pure reduction of the server message stream.
//
// The console never computes scores or allocations itself. Team totals are
// copied from score_update/session_end messages, assignments from set_start
// and reallocation_applied, and objects appear and disappear only through
// spawn/expire/click-echo messages. apply() returns a fresh state object so
// the renderer can treat states as immutable snapshots.

import {
  ObjectKind,
  ServerMessage,
  SUPPORTED_SCHEMA,
  partitionViews,
} from "./protocol.js";

export interface LiveObject {
  id: string;
  view: number;
  kind: ObjectKind;
}

export interface PromptState {
  kind: "isa" | "approval";
  deadline: number; // server ms
  issuedAt: number; // server ms of the prompt message
  current?: number[];
  proposed?: number[];
}

export interface ScoreCue {
  delta: number;
  at: number; // server ms
}

export interface ConsoleState {
  operator: number;
  schemaOk: boolean | null;
  phase: string;
  serverTime: number;
  taskKind: string | null;
  taskIndex: number;
  setNumber: number;
  setActive: boolean;
  assignment: number[];
  myViews: number[];
  objects: Record<string, LiveObject>;
  teamTotal: number;
  scoreCue: ScoreCue | null;
  prompt: PromptState | null;
  lastIsaScore: number; // fallback for a lapsed workload prompt
  sessionEnded: boolean;
  setsSeen: number;
  notices: string[];
}

export function initialState(operator: number): ConsoleState {
  return {
    operator,
    schemaOk: null,
    phase: "connecting",
    serverTime: 0,
    taskKind: null,
    taskIndex: -1,
    setNumber: 0,
    setActive: false,
    assignment: [],
    myViews: [],
    objects: {},
    teamTotal: 0,
    scoreCue: null,
    prompt: null,
    lastIsaScore: 0,
    sessionEnded: false,
    setsSeen: 0,
    notices: [],
  };
}

function notice(state: ConsoleState, text: string): string[] {
  return [...state.notices.slice(-2), text];
}

export function apply(state: ConsoleState, msg: ServerMessage): ConsoleState {
  const next: ConsoleState = { ...state, objects: { ...state.objects } };
  if ("t" in msg && typeof msg.t === "number") {
    next.serverTime = Math.max(state.serverTime, msg.t);
  }
  switch (msg.type) {
    case "hello": {
      next.schemaOk = msg.schema === SUPPORTED_SCHEMA;
      next.operator = msg.operator;
      const snap = msg.state;
      next.phase = snap.phase;
      next.teamTotal = snap.team_total;
      next.assignment = snap.assignment;
      next.myViews = snap.views[msg.operator] ?? [];
      next.taskIndex = snap.task;
      next.taskKind = snap.task_kind;
      next.setNumber = snap.set;
      next.setActive = snap.phase === "in_set";
      next.objects = {};
      for (const obj of snap.live_objects) {
        if (next.myViews.includes(obj.view)) {
          next.objects[obj.object] = { id: obj.object, view: obj.view, kind: obj.kind };
        }
      }
      next.sessionEnded = snap.phase === "ended";
      return next;
    }
    case "session_start":
      next.phase = "running";
      return next;
    case "set_start":
      next.taskIndex = msg.task;
      next.taskKind = msg.kind;
      next.setNumber = msg.set;
      next.setActive = true;
      next.phase = "in_set";
      next.assignment = msg.assignment;
      next.myViews = msg.views[next.operator] ?? [];
      next.objects = {};
      next.prompt = null;
      next.setsSeen = state.setsSeen + 1;
      return next;
    case "set_end":
      next.setActive = false;
      next.phase = "break";
      next.objects = {};
      return next;
    case "object_spawn":
      next.objects[msg.object] = { id: msg.object, view: msg.view, kind: msg.kind };
      return next;
    case "object_expire":
      delete next.objects[msg.object];
      return next;
    case "click":
      // the echo both confirms the click and removes a consumed object
      if (msg.object !== null) {
        delete next.objects[msg.object];
      }
      if (msg.outcome === "rejected") {
        next.notices = notice(state, "click rejected by server");
      }
      return next;
    case "score_update":
      next.teamTotal = msg.team_total;
      if (msg.operator === state.operator && typeof msg.delta === "number") {
        next.scoreCue = { delta: msg.delta, at: msg.t };
      }
      return next;
    case "isa_prompt":
      next.prompt = { kind: "isa", deadline: msg.deadline, issuedAt: msg.t };
      return next;
    case "isa_response":
      if (msg.operator === state.operator) {
        next.lastIsaScore = msg.score;
        if (state.prompt?.kind === "isa") {
          next.prompt = null;
        }
      }
      return next;
    case "approval_prompt":
      next.prompt = {
        kind: "approval",
        deadline: msg.deadline,
        issuedAt: msg.t,
        current: msg.current,
        proposed: msg.proposed,
      };
      return next;
    case "approval_decision":
      if (msg.operator === state.operator && state.prompt?.kind === "approval") {
        next.prompt = null;
      }
      return next;
    case "reallocation_applied":
      next.assignment = msg.assignment;
      next.myViews = partitionViews(msg.assignment)[next.operator] ?? [];
      return next;
    case "task_end":
      next.phase = "between_tasks";
      next.prompt = null;
      return next;
    case "session_end":
      next.sessionEnded = true;
      next.phase = "ended";
      next.teamTotal = msg.team_total;
      next.prompt = null;
      return next;
    case "error":
      next.notices = notice(state, msg.message);
      return next;
    default:
      return next;
  }
}

/** Objects of one view, oldest first (render order). */
export function objectsInView(state: ConsoleState, view: number): LiveObject[] {
  return Object.values(state.objects).filter((o) => o.view === view);
}
