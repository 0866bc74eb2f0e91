// WebSocket wrapper: JSON in/out, reconnect with backoff, status callback.

import { ClientMessage, ServerMessage } from "./protocol.js";

export type ConnectionStatus = "connecting" | "open" | "reconnecting" | "closed";

export interface SocketHandlers {
  onMessage: (msg: ServerMessage) => void;
  onStatus: (status: ConnectionStatus) => void;
}

export class SessionSocket {
  private ws: WebSocket | null = null;
  private closedByUser = false;
  private retryTimer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private readonly url: string,
    private readonly handlers: SocketHandlers,
  ) {
    this.open("connecting");
  }

  private open(status: ConnectionStatus): void {
    this.handlers.onStatus(status);
    this.ws = new WebSocket(this.url);
    this.ws.onopen = () => this.handlers.onStatus("open");
    this.ws.onmessage = (event) => {
      this.handlers.onMessage(JSON.parse(event.data as string) as ServerMessage);
    };
    this.ws.onclose = () => {
      this.ws = null;
      if (this.closedByUser) {
        this.handlers.onStatus("closed");
        return;
      }
      this.handlers.onStatus("reconnecting");
      this.retryTimer = setTimeout(() => this.open("reconnecting"), 2000);
    };
  }

  send(msg: ClientMessage): boolean {
    if (this.ws && this.ws.readyState === WebSocket.OPEN) {
      this.ws.send(JSON.stringify(msg));
      return true;
    }
    return false;
  }

  close(): void {
    this.closedByUser = true;
    if (this.retryTimer !== null) clearTimeout(this.retryTimer);
    this.ws?.close();
  }
}
