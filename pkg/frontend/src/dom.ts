// DOM rendering. Pure projection of ConsoleState onto a fixed skeleton;
// every handler delegates to the app shell, nothing is computed here.

import { ConsoleState, objectsInView } from "./state.js";

export interface RenderContext {
  connection: string;
  promptRemainingMs: number | null;
  promptFraction: number | null;
  cueVisible: boolean;
  onClickView: (view: number) => void;
  onIsa: (score: number) => void;
  onApproval: (accept: boolean) => void;
}

const ISA_LABELS: [number, string][] = [
  [-2, "very low"],
  [-1, "low"],
  [0, "fair"],
  [1, "high"],
  [2, "very high"],
];

function el(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id} in the page skeleton`);
  return node;
}

export function renderAll(state: ConsoleState, ctx: RenderContext): void {
  renderStatus(state, ctx);
  renderScore(state, ctx);
  renderGrid(state, ctx);
  renderPrompt(state, ctx);
  renderNotices(state);
  renderSurveyVisibility(state);
}

function renderStatus(state: ConsoleState, ctx: RenderContext): void {
  el("operator-label").textContent = `operator ${state.operator + 1}`;
  const task = state.taskKind ? `task ${state.taskKind}` : "waiting";
  const set = state.setNumber > 0 ? ` — set ${state.setNumber}` : "";
  el("task-label").textContent = state.sessionEnded ? "session complete" : task + set;
  el("phase-label").textContent = state.phase.replace(/_/g, " ");
  const banner = el("conn-banner");
  banner.hidden = ctx.connection === "open";
  banner.textContent =
    ctx.connection === "reconnecting" ? "connection lost — reconnecting…" : "connecting…";
  const schema = el("schema-banner");
  schema.hidden = state.schemaOk !== false;
}

function renderScore(state: ConsoleState, ctx: RenderContext): void {
  el("team-score").textContent = String(state.teamTotal);
  const cue = el("score-cue");
  if (ctx.cueVisible && state.scoreCue) {
    cue.hidden = false;
    cue.textContent = state.scoreCue.delta > 0 ? `+${state.scoreCue.delta}` : `${state.scoreCue.delta}`;
    cue.className = state.scoreCue.delta > 0 ? "cue pos" : "cue neg";
  } else {
    cue.hidden = true;
  }
}

function renderGrid(state: ConsoleState, ctx: RenderContext): void {
  const grid = el("grid");
  const interactive = state.setActive && ctx.connection === "open" && !state.sessionEnded;
  const wanted = new Set(state.myViews.map(String));

  // drop tiles for views no longer assigned
  for (const tile of Array.from(grid.querySelectorAll<HTMLElement>(".tile"))) {
    if (!wanted.has(tile.dataset.view ?? "")) tile.remove();
  }
  for (const view of state.myViews) {
    let tile = grid.querySelector<HTMLButtonElement>(`.tile[data-view="${view}"]`);
    if (!tile) {
      tile = document.createElement("button");
      tile.className = "tile";
      tile.dataset.view = String(view);
      tile.addEventListener("click", () => ctx.onClickView(view));
      const label = document.createElement("span");
      label.className = "tile-label";
      label.textContent = `view ${view + 1}`;
      const objects = document.createElement("span");
      objects.className = "tile-objects";
      tile.append(label, objects);
      grid.appendChild(tile);
    }
    tile.disabled = !interactive;
    const box = tile.querySelector<HTMLElement>(".tile-objects")!;
    const live = objectsInView(state, view);
    const existing = new Map(
      Array.from(box.querySelectorAll<HTMLElement>(".obj")).map((n) => [n.dataset.id!, n]),
    );
    for (const obj of live) {
      if (!existing.has(obj.id)) {
        const sprite = document.createElement("span");
        sprite.className = `obj ${obj.kind}`;
        sprite.dataset.id = obj.id;
        sprite.dataset.kind = obj.kind;
        sprite.textContent = obj.kind === "abnormal" ? "☠" : "●";
        box.appendChild(sprite);
      }
      existing.delete(obj.id);
    }
    for (const gone of existing.values()) gone.remove();
  }
}

function renderPrompt(state: ConsoleState, ctx: RenderContext): void {
  const overlay = el("prompt");
  if (!state.prompt) {
    overlay.hidden = true;
    overlay.replaceChildren();
    return;
  }
  overlay.hidden = false;
  const rebuildNeeded = overlay.dataset.promptKey !== promptKey(state);
  if (rebuildNeeded) {
    overlay.dataset.promptKey = promptKey(state);
    overlay.replaceChildren(buildPromptCard(state, ctx));
  }
  const seconds = overlay.querySelector<HTMLElement>(".countdown-seconds");
  if (seconds && ctx.promptRemainingMs !== null) {
    seconds.textContent = `${Math.ceil(ctx.promptRemainingMs / 1000)}s`;
  }
  const bar = overlay.querySelector<HTMLElement>(".countdown-fill");
  if (bar && ctx.promptFraction !== null) {
    bar.style.width = `${Math.round(ctx.promptFraction * 100)}%`;
  }
}

function promptKey(state: ConsoleState): string {
  return state.prompt ? `${state.prompt.kind}:${state.prompt.deadline}` : "";
}

function buildPromptCard(state: ConsoleState, ctx: RenderContext): HTMLElement {
  const prompt = state.prompt!;
  const card = document.createElement("div");
  card.className = "prompt-card";

  const title = document.createElement("h2");
  const body = document.createElement("div");
  body.className = "prompt-body";

  if (prompt.kind === "isa") {
    title.textContent = "How high is your workload right now?";
    for (const [score, label] of ISA_LABELS) {
      const button = document.createElement("button");
      button.className = "isa-option";
      button.dataset.score = String(score);
      button.textContent = `${label} (${score >= 0 ? "+" : ""}${score})`;
      button.addEventListener("click", () => ctx.onIsa(score));
      body.appendChild(button);
    }
  } else {
    title.textContent = "Accept the proposed view reassignment?";
    const detail = document.createElement("p");
    detail.className = "approval-detail";
    const mine = state.operator;
    detail.textContent =
      `your views: ${prompt.current?.[mine]} → ${prompt.proposed?.[mine]}` +
      `   (team split ${prompt.current?.join("/")} → ${prompt.proposed?.join("/")})`;
    body.appendChild(detail);
    const accept = document.createElement("button");
    accept.className = "approve";
    accept.textContent = "Accept";
    accept.addEventListener("click", () => ctx.onApproval(true));
    const reject = document.createElement("button");
    reject.className = "reject";
    reject.textContent = "Reject";
    reject.addEventListener("click", () => ctx.onApproval(false));
    body.append(accept, reject);
  }

  const countdown = document.createElement("div");
  countdown.className = "countdown";
  countdown.innerHTML =
    '<span class="countdown-seconds"></span><span class="countdown-bar"><span class="countdown-fill"></span></span>';

  card.append(title, body, countdown);
  return card;
}

function renderNotices(state: ConsoleState): void {
  const box = el("notices");
  box.replaceChildren(
    ...state.notices.map((text) => {
      const item = document.createElement("div");
      item.className = "notice";
      item.textContent = text;
      return item;
    }),
  );
}

function renderSurveyVisibility(state: ConsoleState): void {
  // surveys open between tasks and after the session
  const panel = el("survey-panel");
  panel.hidden = !(state.phase === "between_tasks" || state.sessionEnded);
}
