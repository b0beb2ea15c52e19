// Wire protocol shared with the session server: UTF-8 JSON text frames.

export interface InputMessage {
  type: 'input';
  vx: number;
  vy: number;
  wz: number;
  dh: number;
}

export interface ModeMessage {
  type: 'mode';
  role: 'leader' | 'follower';
}

export interface ResetMessage {
  type: 'reset';
}

export interface PauseMessage {
  type: 'pause';
  on: boolean;
}

export type ClientMessage = InputMessage | ModeMessage | ResetMessage | PauseMessage;

export interface StateFrame {
  type: 'state';
  i: number;
  t: number;
  carrier: { q: number[]; qd: number[] };
  object: {
    pos: number[];
    quat: number[];
    lin_vel: number[];
    ang_vel: number[];
    end_heights: number[];
  };
  support: { pos: number[]; yaw_rate: number; vel: number[] };
  forces: { grasp_stretch: number[]; joint: number; joint_vec: number[] };
  metrics: { lin_vel_err: number; avg_ef: number; mode: string; paused: boolean };
}

export interface ErrorFrame {
  type: 'error';
  message: string;
}

export type ServerFrame = StateFrame | ErrorFrame;

const clamp1 = (v: number) => Math.max(-1, Math.min(1, v));

/** Inputs leave the client clamped to [-1, 1], always. */
export function makeInputMessage(vx: number, vy: number, wz: number, dh: number): InputMessage {
  return { type: 'input', vx: clamp1(vx), vy: clamp1(vy), wz: clamp1(wz), dh: clamp1(dh) };
}

export function encodeMessage(msg: ClientMessage): string {
  return JSON.stringify(msg);
}

export function decodeFrame(raw: string): ServerFrame | null {
  let parsed: unknown;
  try {
    parsed = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof parsed !== 'object' || parsed === null) return null;
  const obj = parsed as { type?: string };
  if (obj.type === 'state') {
    const f = parsed as StateFrame;
    if (!Array.isArray(f.carrier?.q) || typeof f.i !== 'number') return null;
    return f;
  }
  if (obj.type === 'error') {
    return parsed as ErrorFrame;
  }
  return null;
}
