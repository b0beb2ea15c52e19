// Keyboard state -> input messages at a fixed cadence, with smooth onset.
//
// Held axes ramp toward +/-1 over RAMP_S seconds and decay back to zero at
// the same rate when released. The server applies its own authoritative
// low-pass; this ramp only keeps the command stream pleasant.

import { InputMessage, makeInputMessage } from './protocol.js';

export const RAMP_S = 0.5;

export interface KeyBindings {
  forward: string;
  back: string;
  left: string;
  right: string;
  turnLeft: string;
  turnRight: string;
  up: string;
  down: string;
  zero: string;
  mode: string;
  reset: string;
}

export const DEFAULT_BINDINGS: KeyBindings = {
  forward: 'w', back: 's',
  left: 'a', right: 'd',
  turnLeft: 'q', turnRight: 'e',
  up: 'r', down: 'f',
  zero: ' ', mode: 'm', reset: 'Backspace',
};

export class InputTracker {
  held = new Set<string>();
  private axes = { vx: 0, vy: 0, wz: 0, dh: 0 };

  constructor(public bindings: KeyBindings = DEFAULT_BINDINGS) {}

  keyDown(key: string): void {
    this.held.add(key.length === 1 ? key.toLowerCase() : key);
  }

  keyUp(key: string): void {
    this.held.delete(key.length === 1 ? key.toLowerCase() : key);
  }

  zeroAll(): void {
    this.axes = { vx: 0, vy: 0, wz: 0, dh: 0 };
  }

  private target(axis: 'vx' | 'vy' | 'wz' | 'dh'): number {
    const b = this.bindings;
    const pairs: Record<string, [string, string]> = {
      vx: [b.forward, b.back],
      vy: [b.left, b.right],
      wz: [b.turnLeft, b.turnRight],
      dh: [b.up, b.down],
    };
    const [pos, neg] = pairs[axis];
    let t = 0;
    if (this.held.has(pos)) t += 1;
    if (this.held.has(neg)) t -= 1;
    return t;
  }

  /** Advance the ramps by dt seconds and emit the message to send. */
  tick(dt: number, gamepadAxes?: { vx: number; vy: number; wz: number; dh: number }): InputMessage {
    if (this.held.has(this.bindings.zero)) this.zeroAll();
    const step = dt / RAMP_S;
    for (const axis of ['vx', 'vy', 'wz', 'dh'] as const) {
      let t = this.target(axis);
      if (gamepadAxes && Math.abs(gamepadAxes[axis]) > 0.05) {
        t = gamepadAxes[axis];
      }
      const cur = this.axes[axis];
      if (cur < t) this.axes[axis] = Math.min(t, cur + step);
      else if (cur > t) this.axes[axis] = Math.max(t, cur - step);
    }
    return makeInputMessage(this.axes.vx, this.axes.vy, this.axes.wz, this.axes.dh);
  }
}
