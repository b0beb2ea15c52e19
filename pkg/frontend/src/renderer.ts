// Orthographic scene views: top-down (x/y) and side (x/z).
// The reduced model is planar + height, so two 2D projections carry
// everything; the decision-relevant signals live in the charts anyway.

import { StateFrame } from './protocol.js';

export interface Camera {
  cx: number;       // world x at view center
  cy: number;       // world y (top) or z (side) at view center
  scale: number;    // px per meter
}

export function worldToScreen(cam: Camera, wx: number, wy: number,
                              w: number, h: number): [number, number] {
  return [w / 2 + (wx - cam.cx) * cam.scale, h / 2 - (wy - cam.cy) * cam.scale];
}

function yawOf(quat: number[]): number {
  const [qw, qx, qy, qz] = quat;
  return Math.atan2(2 * (qw * qz + qx * qy), 1 - 2 * (qy * qy + qz * qz));
}

export class SceneRenderer {
  constructor(private top: HTMLCanvasElement, private side: HTMLCanvasElement) {}

  draw(frame: StateFrame): void {
    const q = frame.carrier.q;
    const base = { x: q[0], y: q[1], yaw: q[2], z: q[3] };
    this.drawTop(frame, base);
    this.drawSide(frame, base);
  }

  private clear(c: HTMLCanvasElement): CanvasRenderingContext2D {
    const ctx = c.getContext('2d')!;
    ctx.fillStyle = '#0b0e11';
    ctx.fillRect(0, 0, c.width, c.height);
    return ctx;
  }

  private drawTop(frame: StateFrame, base: { x: number; y: number; yaw: number }): void {
    const c = this.top;
    const ctx = this.clear(c);
    const obj = frame.object;
    const cam: Camera = {
      cx: 0.5 * (base.x + frame.support.pos[0]),
      cy: 0.5 * (base.y + frame.support.pos[1]),
      scale: Math.min(c.width, c.height) / 5.0,
    };
    const pt = (wx: number, wy: number) => worldToScreen(cam, wx, wy, c.width, c.height);

    // grid
    ctx.strokeStyle = '#1a2026';
    for (let gx = Math.floor(cam.cx - 3); gx <= cam.cx + 3; gx++) {
      const [px] = pt(gx, 0);
      ctx.beginPath(); ctx.moveTo(px, 0); ctx.lineTo(px, c.height); ctx.stroke();
    }
    for (let gy = Math.floor(cam.cy - 3); gy <= cam.cy + 3; gy++) {
      const [, py] = pt(0, gy);
      ctx.beginPath(); ctx.moveTo(0, py); ctx.lineTo(c.width, py); ctx.stroke();
    }

    // carrier base: circle + heading tick
    const [bx, by] = pt(base.x, base.y);
    ctx.fillStyle = '#4aa3ff';
    ctx.beginPath(); ctx.arc(bx, by, 0.22 * cam.scale, 0, 2 * Math.PI); ctx.fill();
    ctx.strokeStyle = '#dff';
    ctx.beginPath();
    ctx.moveTo(bx, by);
    ctx.lineTo(bx + 0.3 * cam.scale * Math.cos(base.yaw),
               by - 0.3 * cam.scale * Math.sin(base.yaw));
    ctx.stroke();

    // object: oriented rectangle with end markers highlighted
    const yaw = yawOf(obj.quat);
    const [ox, oy] = pt(obj.pos[0], obj.pos[1]);
    ctx.save();
    ctx.translate(ox, oy);
    ctx.rotate(-yaw);
    ctx.fillStyle = '#caa35a';
    ctx.fillRect(-0.5 * cam.scale, -0.2 * cam.scale, 1.0 * cam.scale, 0.4 * cam.scale);
    ctx.fillStyle = '#ff5d5d';
    ctx.beginPath(); ctx.arc(-0.5 * cam.scale, 0, 4, 0, 2 * Math.PI); ctx.fill();
    ctx.beginPath(); ctx.arc(0.5 * cam.scale, 0, 4, 0, 2 * Math.PI); ctx.fill();
    ctx.restore();

    // support body (the human partner)
    const [sx, sy] = pt(frame.support.pos[0], frame.support.pos[1]);
    ctx.fillStyle = '#6bd06b';
    ctx.beginPath(); ctx.arc(sx, sy, 0.15 * cam.scale, 0, 2 * Math.PI); ctx.fill();
  }

  private drawSide(frame: StateFrame, base: { x: number; z: number }): void {
    const c = this.side;
    const ctx = this.clear(c);
    const cam: Camera = {
      cx: 0.5 * (base.x + frame.support.pos[0]),
      cy: 0.7,
      scale: Math.min(c.width, c.height) / 3.0,
    };
    const pt = (wx: number, wz: number) => worldToScreen(cam, wx, wz, c.width, c.height);

    // ground line
    ctx.strokeStyle = '#2a3138';
    const [, gy] = pt(0, 0);
    ctx.beginPath(); ctx.moveTo(0, gy); ctx.lineTo(c.width, gy); ctx.stroke();

    // carrier: leg column + base blob
    const [bx, bz] = pt(base.x, base.z);
    ctx.strokeStyle = '#4aa3ff';
    ctx.lineWidth = 4;
    ctx.beginPath(); ctx.moveTo(bx, gy); ctx.lineTo(bx, bz); ctx.stroke();
    ctx.lineWidth = 1;
    ctx.fillStyle = '#4aa3ff';
    ctx.beginPath(); ctx.arc(bx, bz, 8, 0, 2 * Math.PI); ctx.fill();

    // object side profile between its end heights
    const [e1, e2] = frame.object.end_heights;
    const objx = frame.object.pos[0];
    const [x1, y1] = pt(objx - 0.5, e1);
    const [x2, y2] = pt(objx + 0.5, e2);
    ctx.strokeStyle = '#caa35a';
    ctx.lineWidth = 6;
    ctx.beginPath(); ctx.moveTo(x1, y1); ctx.lineTo(x2, y2); ctx.stroke();
    ctx.lineWidth = 1;
    ctx.fillStyle = '#ff5d5d';
    ctx.beginPath(); ctx.arc(x1, y1, 4, 0, 2 * Math.PI); ctx.fill();
    ctx.beginPath(); ctx.arc(x2, y2, 4, 0, 2 * Math.PI); ctx.fill();

    // support column
    const [sx, sz] = pt(frame.support.pos[0], frame.support.pos[2]);
    ctx.strokeStyle = '#6bd06b';
    ctx.lineWidth = 4;
    ctx.beginPath(); ctx.moveTo(sx, gy); ctx.lineTo(sx, sz); ctx.stroke();
    ctx.lineWidth = 1;
  }
}
