// Console wiring: connect, pump inputs at 30 Hz, render on animation frames.

import { SessionClient } from './client.js';
import { DEFAULT_BINDINGS, InputTracker, KeyBindings } from './input.js';
import { StripChart } from './chart.js';
import { SceneRenderer } from './renderer.js';
import { ViewModel } from './viewmodel.js';
import { StateFrame } from './protocol.js';

const INPUT_HZ = 30;
const BINDINGS_KEY = 'cocarry.bindings';

function loadBindings(): KeyBindings {
  try {
    const raw = localStorage.getItem(BINDINGS_KEY);
    if (raw) return { ...DEFAULT_BINDINGS, ...JSON.parse(raw) };
  } catch {
    // fall through to defaults
  }
  return { ...DEFAULT_BINDINGS };
}

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

export function start(): void {
  const vm = new ViewModel();
  const tracker = new InputTracker(loadBindings());
  const url = (document.body.dataset.server ?? `ws://${location.hostname}:8800`);
  let mode: 'leader' | 'follower' = 'follower';
  let paused = false;
  let lastSimTime = 0;

  const client = new SessionClient(url, {
    onFrame(frame) {
      if (frame.type === 'error') {
        vm.lastError = frame.message;
        return;
      }
      if (frame.t < lastSimTime - 1.0) vm.onResetObserved();
      lastSimTime = frame.t;
      mode = frame.metrics.mode as 'leader' | 'follower';
      paused = frame.metrics.paused;
      vm.onFrame(frame);
    },
    onStatus(status) {
      vm.status = status;
      el<HTMLSpanElement>('status').textContent = status;
      el<HTMLSpanElement>('status').className = `status ${status}`;
    },
  });
  client.connect();

  const scene = new SceneRenderer(el<HTMLCanvasElement>('view-top'),
                                  el<HTMLCanvasElement>('view-side'));
  const charts = [
    new StripChart(el<HTMLCanvasElement>('chart-force'), 'joint force', '#ff915d', 'N'),
    new StripChart(el<HTMLCanvasElement>('chart-height'), 'end height diff', '#5dc8ff', 'm'),
    new StripChart(el<HTMLCanvasElement>('chart-speed'), 'support speed', '#6bd06b', 'm/s'),
    new StripChart(el<HTMLCanvasElement>('chart-objspeed'), 'object speed', '#caa35a', 'm/s'),
  ];

  window.addEventListener('keydown', (ev) => {
    if (ev.repeat) return;
    const key = ev.key.length === 1 ? ev.key.toLowerCase() : ev.key;
    if (key === tracker.bindings.mode) {
      mode = mode === 'leader' ? 'follower' : 'leader';
      client.send({ type: 'mode', role: mode });
    } else if (key === tracker.bindings.reset) {
      client.send({ type: 'reset' });
      ev.preventDefault();
    } else if (key === 'p') {
      paused = !paused;
      client.send({ type: 'pause', on: paused });
    } else {
      tracker.keyDown(ev.key);
    }
  });
  window.addEventListener('keyup', (ev) => tracker.keyUp(ev.key));
  window.addEventListener('blur', () => {
    tracker.held.clear();
    tracker.zeroAll();
  });

  function pollGamepad() {
    const pads = navigator.getGamepads ? navigator.getGamepads() : [];
    const p = pads && pads[0];
    if (!p) return undefined;
    return { vx: -(p.axes[1] ?? 0), vy: -(p.axes[0] ?? 0),
             wz: -(p.axes[2] ?? 0), dh: -(p.axes[3] ?? 0) };
  }

  setInterval(() => {
    client.send(tracker.tick(1 / INPUT_HZ, pollGamepad()));
  }, 1000 / INPUT_HZ);

  function render() {
    const frame = vm.frame as StateFrame | null;
    if (frame) {
      scene.draw(frame);
      charts[0].draw(vm.jointForce, frame.t);
      charts[1].draw(vm.heightDiff, frame.t);
      charts[2].draw(vm.supportSpeed, frame.t);
      charts[3].draw(vm.objectSpeed, frame.t);
      el<HTMLSpanElement>('hud-mode').textContent = mode;
      el<HTMLSpanElement>('hud-linerr').textContent =
        frame.metrics.lin_vel_err.toFixed(3);
      el<HTMLSpanElement>('hud-ef').textContent = frame.metrics.avg_ef.toFixed(2);
      el<HTMLSpanElement>('hud-time').textContent = frame.t.toFixed(1);
    }
    requestAnimationFrame(render);
  }
  requestAnimationFrame(render);
}

if (typeof document !== 'undefined' && document.readyState !== 'loading') {
  start();
} else if (typeof document !== 'undefined') {
  document.addEventListener('DOMContentLoaded', start);
}
