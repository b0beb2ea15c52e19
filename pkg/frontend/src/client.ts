// WebSocket client with reconnect/backoff; callbacks only enqueue state.

import { ClientMessage, decodeFrame, encodeMessage, ServerFrame } from './protocol.js';

export interface ClientHooks {
  onFrame(frame: ServerFrame): void;
  onStatus(status: 'connecting' | 'connected' | 'disconnected'): void;
}

export class SessionClient {
  private ws: WebSocket | null = null;
  private backoffMs = 250;
  private closed = false;
  private timer: ReturnType<typeof setTimeout> | null = null;

  constructor(private url: string, private hooks: ClientHooks,
              private socketFactory: (url: string) => WebSocket =
              (u) => new WebSocket(u)) {}

  connect(): void {
    if (this.closed) return;
    this.hooks.onStatus('connecting');
    const ws = this.socketFactory(this.url);
    this.ws = ws;
    ws.onopen = () => {
      this.backoffMs = 250;
      this.hooks.onStatus('connected');
    };
    ws.onmessage = (ev: MessageEvent) => {
      const frame = decodeFrame(String(ev.data));
      if (frame) this.hooks.onFrame(frame);
    };
    ws.onclose = () => {
      this.ws = null;
      this.hooks.onStatus('disconnected');
      this.scheduleReconnect();
    };
    ws.onerror = () => {
      ws.close();
    };
  }

  private scheduleReconnect(): void {
    if (this.closed || this.timer) return;
    this.timer = setTimeout(() => {
      this.timer = null;
      this.connect();
    }, this.backoffMs);
    this.backoffMs = Math.min(this.backoffMs * 2, 5000);
  }

  send(msg: ClientMessage): boolean {
    if (this.ws && this.ws.readyState === WebSocket.OPEN) {
      this.ws.send(encodeMessage(msg));
      return true;
    }
    return false;
  }

  close(): void {
    this.closed = true;
    if (this.timer) clearTimeout(this.timer);
    this.ws?.close();
  }
}
