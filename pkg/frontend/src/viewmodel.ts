// Client-side state: the latest frame, connection status, and rolling chart
// buffers. Chart values are copied verbatim from frames, never re-derived.

import { StateFrame } from './protocol.js';

export type ConnectionStatus = 'connecting' | 'connected' | 'disconnected';

export class RingBuffer {
  t: number[] = [];
  v: number[] = [];

  constructor(public windowS = 30) {}

  push(t: number, v: number): void {
    this.t.push(t);
    this.v.push(v);
    const cutoff = t - this.windowS;
    let drop = 0;
    while (drop < this.t.length && this.t[drop] < cutoff) drop++;
    if (drop > 0) {
      this.t.splice(0, drop);
      this.v.splice(0, drop);
    }
  }

  get length(): number {
    return this.v.length;
  }

  last(): number {
    return this.v.length ? this.v[this.v.length - 1] : 0;
  }
}

export class ViewModel {
  frame: StateFrame | null = null;
  status: ConnectionStatus = 'connecting';
  lastError = '';
  framesSeen = 0;

  jointForce = new RingBuffer();
  heightDiff = new RingBuffer();
  supportSpeed = new RingBuffer();
  objectSpeed = new RingBuffer();

  /** Frames may arrive with index gaps after reconnects; tolerate them. */
  onFrame(frame: StateFrame): void {
    this.frame = frame;
    this.framesSeen++;
    const t = frame.t;
    this.jointForce.push(t, frame.forces.joint);
    const [h1, h2] = frame.object.end_heights;
    this.heightDiff.push(t, h1 - h2);
    const sv = frame.support.vel;
    this.supportSpeed.push(t, Math.hypot(sv[0], sv[1]));
    const ov = frame.object.lin_vel;
    this.objectSpeed.push(t, Math.hypot(ov[0], ov[1]));
  }

  /** Reset clears history (simulated time restarted). */
  onResetObserved(): void {
    this.jointForce = new RingBuffer();
    this.heightDiff = new RingBuffer();
    this.supportSpeed = new RingBuffer();
    this.objectSpeed = new RingBuffer();
  }
}
