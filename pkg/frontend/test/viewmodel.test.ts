import { describe, expect, it } from 'vitest';
import { chartScale, toPixels } from '../src/chart.js';
import { StateFrame } from '../src/protocol.js';
import { RingBuffer, ViewModel } from '../src/viewmodel.js';

function frame(t: number, joint: number, h1: number, h2: number): StateFrame {
  return {
    type: 'state', i: Math.round(t * 30), t,
    carrier: { q: new Array(12).fill(0), qd: new Array(12).fill(0) },
    object: { pos: [0, 0, 0.6], quat: [1, 0, 0, 0], lin_vel: [0.3, 0.4, 0],
              ang_vel: [0, 0, 0], end_heights: [h1, h2] },
    support: { pos: [1.35, 0, 0.6], yaw_rate: 0, vel: [0.6, 0.8, 0] },
    forces: { grasp_stretch: [0, 0], joint, joint_vec: [joint, 0, 0] },
    metrics: { lin_vel_err: 0.1, avg_ef: joint, mode: 'follower', paused: false },
  };
}

describe('RingBuffer', () => {
  it('drops samples older than the window', () => {
    const rb = new RingBuffer(30);
    for (let t = 0; t <= 100; t += 0.5) rb.push(t, t);
    expect(rb.t[0]).toBeGreaterThanOrEqual(70);
    expect(rb.last()).toBe(100);
    expect(rb.length).toBeLessThanOrEqual(61);
  });
});

describe('ViewModel', () => {
  it('chart values equal the frame fields exactly', () => {
    const vm = new ViewModel();
    vm.onFrame(frame(0.1, 12.5, 0.65, 0.6));
    expect(vm.jointForce.last()).toBe(12.5);
    expect(vm.heightDiff.last()).toBeCloseTo(0.05, 12);
    expect(vm.supportSpeed.last()).toBeCloseTo(Math.hypot(0.6, 0.8), 12);
    expect(vm.objectSpeed.last()).toBeCloseTo(0.5, 12);
  });

  it('tolerates frame index gaps', () => {
    const vm = new ViewModel();
    vm.onFrame(frame(0.1, 1, 0.6, 0.6));
    vm.onFrame(frame(5.0, 2, 0.6, 0.6));
    expect(vm.framesSeen).toBe(2);
    expect(vm.jointForce.length).toBe(2);
  });

  it('reset clears chart history', () => {
    const vm = new ViewModel();
    vm.onFrame(frame(10, 5, 0.6, 0.6));
    vm.onResetObserved();
    expect(vm.jointForce.length).toBe(0);
  });
});

describe('chart math', () => {
  it('scale covers the data with headroom', () => {
    const rb = new RingBuffer(30);
    rb.push(1, -2);
    rb.push(2, 4);
    const s = chartScale(rb, 30, 2);
    expect(s.vMin).toBeLessThan(-2);
    expect(s.vMax).toBeGreaterThan(4);
  });

  it('degenerate data still yields a usable span', () => {
    const rb = new RingBuffer(30);
    rb.push(1, 7);
    rb.push(2, 7);
    const s = chartScale(rb, 30, 2);
    expect(s.vMax).toBeGreaterThan(s.vMin);
  });

  it('pixels map into the canvas box', () => {
    const rb = new RingBuffer(30);
    for (let t = 0; t < 30; t++) rb.push(t, Math.sin(t));
    const s = chartScale(rb, 30, 29);
    for (const [x, y] of toPixels(rb, s, 560, 160)) {
      expect(x).toBeGreaterThanOrEqual(0);
      expect(x).toBeLessThanOrEqual(560);
      expect(y).toBeGreaterThanOrEqual(0);
      expect(y).toBeLessThanOrEqual(160);
    }
  });
});
