// Wire protocol between the operator console and the session service.
// Mirrors the server's documented message schema; the `schema` field of the
// hello message must match SUPPORTED_SCHEMA or the console refuses to run.

export const SUPPORTED_SCHEMA = 1;

export type ObjectKind = "abnormal" | "normal";
export type ClickOutcome = "hit" | "penalty" | "miss" | "rejected";

export interface SnapshotState {
  schema: number;
  phase: string;
  t: number;
  task: number;
  task_kind: string | null;
  set: number;
  assignment: number[];
  views: number[][];
  team_total: number;
  live_objects: { object: string; view: number; kind: ObjectKind }[];
  open_prompts: { isa: number[]; approval: number[] };
  task_plan: string[];
  n_operators: number;
}

interface Base {
  type: string;
  t: number;
}

export interface HelloMsg extends Base {
  type: "hello";
  schema: number;
  operator: number;
  state: SnapshotState;
}

export interface SessionStartMsg extends Base {
  type: "session_start";
  schema: number;
  n_operators: number;
  total_views: number;
  task_plan: string[];
  sets_per_task: number;
}

export interface SetStartMsg extends Base {
  type: "set_start";
  task: number;
  kind: string;
  set: number;
  assignment: number[];
  views: number[][];
}

export interface SetEndMsg extends Base {
  type: "set_end";
  task: number;
  set: number;
}

export interface ObjectSpawnMsg extends Base {
  type: "object_spawn";
  view: number;
  object: string;
  kind: ObjectKind;
}

export interface ObjectExpireMsg extends Base {
  type: "object_expire";
  view: number;
  object: string;
}

export interface ClickEchoMsg extends Base {
  type: "click";
  operator: number;
  view: number;
  object: string | null;
  outcome: ClickOutcome;
}

export interface ScoreUpdateMsg extends Base {
  type: "score_update";
  team_total: number;
  // present only on the clicking operator's stream
  operator?: number;
  delta?: number;
}

export interface IsaPromptMsg extends Base {
  type: "isa_prompt";
  operator: number;
  deadline: number;
}

export interface IsaResponseMsg extends Base {
  type: "isa_response";
  operator: number;
  score: number;
  timed_out: boolean;
}

export interface ApprovalPromptMsg extends Base {
  type: "approval_prompt";
  operator: number;
  current: number[];
  proposed: number[];
  deadline: number;
}

export interface ApprovalDecisionMsg extends Base {
  type: "approval_decision";
  operator: number;
  accept: boolean;
  timed_out: boolean;
}

export interface ReallocationMsg extends Base {
  type: "reallocation_applied";
  assignment: number[];
  accepted: boolean;
}

export interface TaskEndMsg extends Base {
  type: "task_end";
  task: number;
  kind: string;
}

export interface SessionEndMsg extends Base {
  type: "session_end";
  team_total: number;
}

export interface ErrorMsg extends Base {
  type: "error";
  message: string;
}

export type ServerMessage =
  | HelloMsg
  | SessionStartMsg
  | SetStartMsg
  | SetEndMsg
  | ObjectSpawnMsg
  | ObjectExpireMsg
  | ClickEchoMsg
  | ScoreUpdateMsg
  | IsaPromptMsg
  | IsaResponseMsg
  | ApprovalPromptMsg
  | ApprovalDecisionMsg
  | ReallocationMsg
  | TaskEndMsg
  | SessionEndMsg
  | ErrorMsg;

export type ClientMessage =
  | { type: "click"; view: number }
  | { type: "isa_response"; score: number }
  | { type: "approval_decision"; accept: boolean };

/** Contiguous view-id blocks for per-operator counts (matches the server). */
export function partitionViews(assignment: number[]): number[][] {
  const blocks: number[][] = [];
  let cursor = 0;
  for (const count of assignment) {
    blocks.push(Array.from({ length: count }, (_, i) => cursor + i));
    cursor += count;
  }
  return blocks;
}
