// Minimal canvas strip chart for the telemetry ring buffers.

import { RingBuffer } from './viewmodel.js';

export interface ChartScale {
  tMin: number;
  tMax: number;
  vMin: number;
  vMax: number;
}

/** Axis range covering the buffer with a little headroom; pure, testable. */
export function chartScale(buf: RingBuffer, windowS: number, now: number,
                           minSpan = 1e-3): ChartScale {
  let vMin = Infinity;
  let vMax = -Infinity;
  for (const v of buf.v) {
    if (v < vMin) vMin = v;
    if (v > vMax) vMax = v;
  }
  if (!isFinite(vMin)) {
    vMin = 0;
    vMax = 1;
  }
  if (vMax - vMin < minSpan) {
    const mid = 0.5 * (vMin + vMax);
    vMin = mid - minSpan / 2;
    vMax = mid + minSpan / 2;
  }
  const pad = 0.08 * (vMax - vMin);
  return { tMin: now - windowS, tMax: now, vMin: vMin - pad, vMax: vMax + pad };
}

export function toPixels(buf: RingBuffer, scale: ChartScale, w: number,
                         h: number): Array<[number, number]> {
  const out: Array<[number, number]> = [];
  const dt = Math.max(1e-9, scale.tMax - scale.tMin);
  const dv = Math.max(1e-9, scale.vMax - scale.vMin);
  for (let i = 0; i < buf.length; i++) {
    const x = ((buf.t[i] - scale.tMin) / dt) * w;
    const y = h - ((buf.v[i] - scale.vMin) / dv) * h;
    out.push([x, y]);
  }
  return out;
}

export class StripChart {
  private ctx: CanvasRenderingContext2D;

  constructor(private canvas: HTMLCanvasElement, private label: string,
              private color: string, private unit: string) {
    this.ctx = canvas.getContext('2d')!;
  }

  draw(buf: RingBuffer, now: number): void {
    const { width: w, height: h } = this.canvas;
    const ctx = this.ctx;
    ctx.fillStyle = '#101418';
    ctx.fillRect(0, 0, w, h);
    const scale = chartScale(buf, buf.windowS, now);
    if (scale.vMin < 0 && scale.vMax > 0) {
      const y0 = h - ((0 - scale.vMin) / (scale.vMax - scale.vMin)) * h;
      ctx.strokeStyle = '#333';
      ctx.beginPath();
      ctx.moveTo(0, y0);
      ctx.lineTo(w, y0);
      ctx.stroke();
    }
    const pts = toPixels(buf, scale, w, h);
    if (pts.length > 1) {
      ctx.strokeStyle = this.color;
      ctx.lineWidth = 1.5;
      ctx.beginPath();
      ctx.moveTo(pts[0][0], pts[0][1]);
      for (const [x, y] of pts) ctx.lineTo(x, y);
      ctx.stroke();
    }
    ctx.fillStyle = '#aab';
    ctx.font = '11px monospace';
    ctx.fillText(`${this.label}: ${buf.last().toFixed(3)} ${this.unit}`, 6, 14);
  }
}
