// App shell: join screen, socket wiring, countdown/auto-submit loop.

import { expired, fractionLeft, remainingMs, startCountdown, Countdown } from "./countdown.js";
import { renderAll } from "./dom.js";
import { ConnectionStatus, SessionSocket } from "./net.js";
import { ServerMessage, SUPPORTED_SCHEMA } from "./protocol.js";
import { apply, ConsoleState, initialState } from "./state.js";
import { buildSurveyForm, postSurvey } from "./survey.js";

const CUE_VISIBLE_MS = 1500;

export class App {
  state: ConsoleState;
  connection: ConnectionStatus = "connecting";
  socket: SessionSocket;
  countdown: Countdown | null = null;
  promptKey = "";
  autoSubmitted = false;
  cueReceivedAt = 0;

  constructor(
    readonly baseUrl: string,
    readonly sessionId: string,
    readonly operator: number,
  ) {
    this.state = initialState(operator);
    const wsBase = baseUrl.replace(/^http/, "ws");
    this.socket = new SessionSocket(`${wsBase}/sessions/${sessionId}/ws/${operator}`, {
      onMessage: (msg) => this.onMessage(msg),
      onStatus: (status) => {
        this.connection = status;
        this.render();
      },
    });
    setInterval(() => this.tick(), 100);
  }

  onMessage(msg: ServerMessage): void {
    const before = this.state;
    this.state = apply(this.state, msg);
    if (msg.type === "hello" && msg.schema !== SUPPORTED_SCHEMA) {
      this.state.notices = [
        `server speaks schema ${msg.schema}, console supports ${SUPPORTED_SCHEMA}`,
      ];
      this.socket.close();
    }
    if (this.state.scoreCue !== before.scoreCue) {
      this.cueReceivedAt = performance.now();
    }
    this.syncCountdown();
    this.render(); // render in the same turn as the message
  }

  private syncCountdown(): void {
    const prompt = this.state.prompt;
    const key = prompt ? `${prompt.kind}:${prompt.deadline}` : "";
    if (key !== this.promptKey) {
      this.promptKey = key;
      this.autoSubmitted = false;
      this.countdown = prompt
        ? startCountdown(prompt.deadline, prompt.issuedAt, performance.now())
        : null;
    }
  }

  private tick(): void {
    const prompt = this.state.prompt;
    if (prompt && this.countdown && !this.autoSubmitted && expired(this.countdown, performance.now())) {
      // lapsed window: submit the documented default; the server enforces
      // the same default on its side, so a late message is harmless
      this.autoSubmitted = true;
      if (prompt.kind === "isa") {
        this.socket.send({ type: "isa_response", score: this.state.lastIsaScore });
      } else {
        this.socket.send({ type: "approval_decision", accept: false });
      }
    }
    this.render();
  }

  render(): void {
    const now = performance.now();
    renderAll(this.state, {
      connection: this.connection,
      promptRemainingMs: this.countdown ? remainingMs(this.countdown, now) : null,
      promptFraction: this.countdown ? fractionLeft(this.countdown, now) : null,
      cueVisible: this.state.scoreCue !== null && now - this.cueReceivedAt < CUE_VISIBLE_MS,
      onClickView: (view) => this.socket.send({ type: "click", view }),
      onIsa: (score) => {
        this.socket.send({ type: "isa_response", score });
        this.autoSubmitted = true;
      },
      onApproval: (accept) => {
        this.socket.send({ type: "approval_decision", accept });
        this.autoSubmitted = true;
      },
    });
  }
}

function joinScreen(): void {
  const base = document.getElementById("join-base") as HTMLInputElement;
  const session = document.getElementById("join-session") as HTMLInputElement;
  const operator = document.getElementById("join-operator") as HTMLInputElement;
  const error = document.getElementById("join-error")!;
  base.value = window.location.origin;

  document.getElementById("join-create")!.addEventListener("click", async () => {
    error.textContent = "";
    try {
      const response = await fetch(`${base.value}/sessions`, {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: "{}",
      });
      const doc = await response.json();
      session.value = doc.id;
    } catch (exc) {
      error.textContent = `could not create session: ${exc}`;
    }
  });

  document.getElementById("join-connect")!.addEventListener("click", () => {
    if (!session.value.trim()) {
      error.textContent = "enter a session id (or create one)";
      return;
    }
    const op = Number(operator.value);
    document.getElementById("join")!.hidden = true;
    document.getElementById("app")!.hidden = false;
    const app = new App(base.value, session.value.trim(), op);
    buildSurveyForm(document.getElementById("survey-form")!, async (kind, payload) => {
      const ok = await postSurvey(app.baseUrl, app.sessionId, app.operator, kind, payload);
      document.getElementById("survey-status")!.textContent = ok ? "submitted" : "failed";
    });
  });
}

if (typeof document !== "undefined" && document.getElementById("join")) {
  joinScreen();
}
