"""Realtime interactive session: the human steers the support body live.

One simulation loop owns the world. Clients connect over a websocket, send
normalized input messages (drained once per control step, in arrival order)
and receive JSON state frames at the broadcast rate. Slow clients have stale
frames replaced, never queued unboundedly; the loop never blocks on them.

The session core (:class:`Session`) is synchronous and fully testable without
sockets; :func:`serve_forever` adds the asyncio/websocket shell and wall-clock
pacing (if compute falls behind, simulated time stretches instead of skipping
steps).
"""

import asyncio
import copy
import json
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .checkpoint import load_checkpoint
from .config import RunConfig
from .env import VecEnv
from .policies import load_policy

VALID_TYPES = ("input", "mode", "reset", "pause")


class InputError(ValueError):
    pass


@dataclass
class SessionConfig:
    checkpoint_path: str = ""
    mode: str = "follower"
    host: str = "127.0.0.1"
    port: int = 8800
    physics_hz: float = 200.0
    policy_hz: float = 50.0
    broadcast_hz: float = 30.0
    input_time_constant_s: float = 0.25
    height_rate_scale: float = 0.2   # m/s at full |dh|

    def validate(self):
        if not (self.physics_hz >= self.policy_hz >= self.broadcast_hz):
            raise ValueError("rates must satisfy physics >= policy >= broadcast")
        return self


def parse_input_message(raw):
    """Validate and clamp a client message; raises InputError on junk."""
    try:
        msg = json.loads(raw)
    except (json.JSONDecodeError, TypeError) as e:
        raise InputError(f"not valid JSON: {e}")
    if not isinstance(msg, dict) or msg.get("type") not in VALID_TYPES:
        raise InputError(f"unknown message type {msg.get('type')!r}"
                         if isinstance(msg, dict) else "message must be an object")
    t = msg["type"]
    if t == "input":
        out = {"type": "input"}
        for k in ("vx", "vy", "wz", "dh"):
            v = msg.get(k, 0.0)
            if not isinstance(v, (int, float)) or not np.isfinite(v):
                raise InputError(f"field {k} must be a finite number")
            out[k] = float(np.clip(v, -1.0, 1.0))
        return out
    if t == "mode":
        role = msg.get("role")
        if role not in ("leader", "follower"):
            raise InputError("mode message needs role leader|follower")
        return {"type": "mode", "role": role}
    if t == "pause":
        on = msg.get("on")
        if not isinstance(on, bool):
            raise InputError("pause message needs boolean 'on'")
        return {"type": "pause", "on": on}
    return {"type": "reset"}


class Session:
    """Simulation + policy + input filter; one control step per tick()."""

    def __init__(self, run_cfg: RunConfig, policy, session_cfg: SessionConfig):
        session_cfg.validate()
        self.scfg = session_cfg
        cfg = copy.deepcopy(run_cfg)
        cfg.run.episode_seconds = 1e9   # live sessions never time out
        self.cfg = cfg
        self.policy = policy
        self.mode = session_cfg.mode
        self.env = VecEnv(cfg, num_envs=1, stage="collab", mode=self.mode,
                          seed=cfg.run.seed)
        self.env.external_commands = True
        self.obs, self.priv = self.env.reset()
        self._zero_support()
        self.target = np.zeros(4)     # vx, vy, wz, dh (normalized)
        self.filtered = np.zeros(4)
        self.paused = False
        self.frame_index = 0
        self.inbox = deque()
        window = max(1, int(round(2.0 / self.env.policy_dt)))
        self._lin_win = deque(maxlen=window)
        self._ef_win = deque(maxlen=window)
        self._last_info = None

    # ------------------------------------------------------------- inputs

    def _zero_support(self):
        self.env.v_applied[0] = 0.0
        self.env.ang_goal[0] = 0.0
        self.env.height_target[0] = float(self.env.world.sup_pos[0, 2])
        self.env.goal_vecs[0] = 0.0

    def apply_input(self, msg):
        """Queue-drained message application; returns a reply dict or None."""
        t = msg["type"]
        if t == "input":
            self.target = np.array([msg["vx"], msg["vy"], msg["wz"], msg["dh"]])
        elif t == "mode":
            self.mode = msg["role"]
            self.env.mode = self.mode
            self.env.follower = self.mode == "follower"
        elif t == "reset":
            self.obs, self.priv = self.env.reset()
            self._zero_support()
            self.filtered[:] = 0.0
            self.frame_index = self.frame_index  # indices stay monotone
            self._lin_win.clear()
            self._ef_win.clear()
        elif t == "pause":
            self.paused = msg["on"]
        return None

    def _scaled_support(self):
        """Normalized filtered inputs scaled onto the support command ranges."""
        r = self.env.ranges
        vx, vy, wz, dh = self.filtered
        lo, hi = r.support_lin_vel
        sx = vx * (hi if vx >= 0 else -lo)
        sy = vy * (hi if vy >= 0 else -lo)
        sw = wz * (r.support_ang_vel[1] if wz >= 0 else -r.support_ang_vel[0])
        return sx, sy, sw, dh * self.scfg.height_rate_scale

    def tick(self):
        """Drain inputs, advance one control step, maybe produce a frame."""
        while self.inbox:
            self.apply_input(self.inbox.popleft())
        if self.paused:
            return
        dt = self.env.policy_dt
        alpha = 1.0 - np.exp(-dt / self.scfg.input_time_constant_s)
        self.filtered += alpha * (self.target - self.filtered)
        sx, sy, sw, dz = self._scaled_support()
        env = self.env
        env.v_applied[0] = (sx, sy)
        env.ang_goal[0] = sw
        lo, hi = env.ranges.support_height
        env.height_target[0] = float(np.clip(env.height_target[0] + dz * dt, lo, hi))
        if self.mode == "leader":
            yaw = float(env.world.q[0, 2])
            c, s = np.cos(yaw), np.sin(yaw)
            env.goal_vecs[0, 0] = c * sx + s * sy
            env.goal_vecs[0, 1] = -s * sx + c * sy
            env.goal_vecs[0, 2] = sw
        act = self.policy.act(self.obs, self.priv)
        self.obs, self.priv, _, dones, info = env.step(act)
        self._last_info = info
        verr = info.obj_vel[0, :2] - info.v_applied[0]
        self._lin_win.append(float(np.linalg.norm(verr)))
        self._ef_win.append(float(info.joint_force_h[0]))

    # ------------------------------------------------------------- frames

    def encode_state_frame(self):
        env = self.env
        w = env.world
        info = self._last_info
        self.frame_index += 1
        frame = {
            "type": "state",
            "i": self.frame_index,
            "t": round(float(w.time[0]), 6),
            "carrier": {
                "q": [round(float(x), 6) for x in w.q[0]],
                "qd": [round(float(x), 6) for x in w.qd[0]],
            },
            "object": {
                "pos": [round(float(x), 6) for x in w.obj_pos[0]],
                "quat": [round(float(x), 8) for x in w.obj_quat[0]],
                "lin_vel": [round(float(x), 6) for x in w.obj_vel[0]],
                "ang_vel": [round(float(x), 6) for x in w.obj_ang[0]],
                "end_heights": [round(float(x), 6) for x in info.end_heights[0]]
                if info is not None else [0.0, 0.0],
            },
            "support": {
                "pos": [round(float(x), 6) for x in w.sup_pos[0]],
                "yaw_rate": round(float(w.sup_ang[0, 2]), 6),
                "vel": [round(float(x), 6) for x in w.sup_vel[0]],
            },
            "forces": {
                "grasp_stretch": [round(float(x), 6) for x in info.grasp_stretch[0]]
                if info is not None else [0.0, 0.0],
                "joint": round(float(info.joint_force_h[0]), 6) if info is not None else 0.0,
                "joint_vec": [round(float(x), 6) for x in info.joint_force[0]]
                if info is not None else [0.0, 0.0, 0.0],
            },
            "metrics": {
                "lin_vel_err": round(float(np.mean(self._lin_win)), 6) if self._lin_win else 0.0,
                "avg_ef": round(float(np.mean(self._ef_win)), 6) if self._ef_win else 0.0,
                "mode": self.mode,
                "paused": self.paused,
            },
        }
        return json.dumps(frame)


async def serve_forever(session, host, port, *, ready_event=None, stop_event=None):
    """Websocket shell: broadcast loop plus per-client intake."""
    import websockets

    clients = set()

    async def handler(ws):
        q = asyncio.Queue(maxsize=2)
        clients.add(q)
        try:
            async def sender():
                while True:
                    await ws.send(await q.get())

            send_task = asyncio.create_task(sender())
            try:
                async for raw in ws:
                    try:
                        session.inbox.append(parse_input_message(raw))
                    except InputError as e:
                        await ws.send(json.dumps({"type": "error", "message": str(e)}))
            finally:
                send_task.cancel()
        finally:
            clients.discard(q)

    def broadcast(text):
        for q in clients:
            if q.full():
                try:
                    q.get_nowait()   # drop the stale frame for the laggard
                except asyncio.QueueEmpty:
                    pass
            q.put_nowait(text)

    async def loop():
        tick_dt = 1.0 / session.scfg.policy_hz
        bcast_dt = 1.0 / session.scfg.broadcast_hz
        ev = asyncio.get_event_loop()
        next_tick = ev.time()
        next_bcast = ev.time()
        while stop_event is None or not stop_event.is_set():
            session.tick()
            now = ev.time()
            if now >= next_bcast:
                broadcast(session.encode_state_frame())
                next_bcast = max(next_bcast + bcast_dt, now - bcast_dt)
            next_tick += tick_dt
            delay = next_tick - ev.time()
            if delay > 0:
                await asyncio.sleep(delay)
            else:
                next_tick = ev.time()   # fell behind: stretch time, drop nothing
                await asyncio.sleep(0)

    async with websockets.serve(handler, host, port) as server:
        bound = server.sockets[0].getsockname()[1] if server.sockets else port
        session.bound_port = bound
        if ready_event is not None:
            ready_event.set()
        await loop()


def run_server(run_cfg, session_cfg):
    """Blocking entry point used by the CLI."""
    ckpt = load_checkpoint(session_cfg.checkpoint_path)
    policy = load_policy(ckpt)
    session = Session(run_cfg, policy, session_cfg)
    print(f"session listening on ws://{session_cfg.host}:{session_cfg.port} "
          f"(mode={session_cfg.mode}, stage={ckpt.stage})")
    asyncio.run(serve_forever(session, session_cfg.host, session_cfg.port))
