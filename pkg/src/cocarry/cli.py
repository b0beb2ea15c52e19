"""Command-line surface for training, evaluation, experiments and serving."""

import argparse
import json
import sys

import numpy as np

from .checkpoint import load_checkpoint
from .config import ConfigError, RunConfig
from .evaluation import (compliance_threshold, emit_report, evaluate,
                         force_ramp_experiment, vertical_force_experiment)
from .policies import load_policy
from .serve import Session, SessionConfig, run_server


def _common(p, checkpoint=False):
    p.add_argument("--config", metavar="PATH", help="run configuration JSON")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", metavar="PATH", help="output path")
    p.add_argument("--mode", choices=["leader", "follower"], default=None)
    p.add_argument("--history", type=int, choices=[10, 25, 50], default=None)
    if checkpoint:
        p.add_argument("--checkpoint", metavar="PATH", required=True)


def build_parser():
    p = argparse.ArgumentParser(
        prog="cocarry",
        description="Collaborative-carrying pipeline: train, distill, evaluate, serve.")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("train-wbc", help="stage 1: whole-body controller")
    _common(sp)
    sp.add_argument("--steps", type=int, default=None, help="env-step budget")
    sp.add_argument("--log-csv", metavar="PATH")

    sp = sub.add_parser("train-teacher", help="stage 2: privileged residual teacher")
    _common(sp, checkpoint=True)
    sp.add_argument("--steps", type=int, default=None)
    sp.add_argument("--log-csv", metavar="PATH")

    sp = sub.add_parser("distill", help="stage 3: student distillation")
    _common(sp, checkpoint=True)
    sp.add_argument("--rounds", type=int, default=None)
    sp.add_argument("--log-csv", metavar="PATH")

    sp = sub.add_parser("train-baseline", help="vanilla or explicit-goal baseline")
    sp.add_argument("kind", choices=["vanilla", "explicit"])
    _common(sp, checkpoint=True)
    sp.add_argument("--steps", type=int, default=None)
    sp.add_argument("--log-csv", metavar="PATH")

    sp = sub.add_parser("eval", help="metrics over paired-seed episodes")
    _common(sp, checkpoint=True)
    sp.add_argument("--episodes", type=int, default=None)
    sp.add_argument("--format", choices=["csv", "json"], default="csv")
    sp.add_argument("--log-ndjson", metavar="PATH", help="per-step episode log")

    sp = sub.add_parser("ramp", help="force-ramp compliance experiment")
    _common(sp, checkpoint=True)
    sp.add_argument("--force-max", type=float, default=None)
    sp.add_argument("--duration", type=float, default=None)

    sp = sub.add_parser("lift", help="vertical-force response experiment")
    _common(sp, checkpoint=True)
    sp.add_argument("--forces", type=float, nargs="+", default=None)
    sp.add_argument("--duration", type=float, default=None)

    sp = sub.add_parser("serve", help="realtime interactive session server")
    _common(sp, checkpoint=True)
    sp.add_argument("--port", type=int, default=None)
    sp.add_argument("--host", default=None)

    sp = sub.add_parser("write-config", help="write the default configuration JSON")
    sp.add_argument("--out", metavar="PATH", required=True)
    return p


def load_config(args):
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg.run.seed = args.seed
    if getattr(args, "mode", None) is not None:
        cfg.run.mode = args.mode
    if getattr(args, "history", None) is not None:
        cfg.run.history = args.history
    return cfg.validate()


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except ConfigError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(f"file not found: {e}", file=sys.stderr)
        return 2


def _dispatch(args):
    from . import pipeline

    if args.command == "write-config":
        RunConfig().save(args.out)
        print(f"wrote default configuration to {args.out}")
        return 0

    cfg = load_config(args)

    if args.command == "train-wbc":
        ckpt = pipeline.train_wbc(cfg, seed=args.seed, budget=args.steps,
                                  out=args.out, log_csv=args.log_csv)
        print(f"stage=wbc steps={ckpt.train_steps} -> {args.out or '(not saved)'}")
        return 0

    if args.command == "train-teacher":
        base = load_checkpoint(args.checkpoint)
        ckpt = pipeline.train_teacher(cfg, base, mode=args.mode, seed=args.seed,
                                      budget=args.steps, out=args.out,
                                      log_csv=args.log_csv)
        print(f"stage=teacher mode={ckpt.mode} steps={ckpt.train_steps} "
              f"-> {args.out or '(not saved)'}")
        return 0

    if args.command == "distill":
        teacher = load_checkpoint(args.checkpoint)
        ckpt = pipeline.distill_student(cfg, teacher, seed=args.seed,
                                        out=args.out, log_csv=args.log_csv,
                                        rounds=args.rounds)
        print(f"stage=student mode={ckpt.mode} holdout_mse="
              f"{ckpt.extra.get('holdout_mse'):.3e} -> {args.out or '(not saved)'}")
        return 0

    if args.command == "train-baseline":
        base = load_checkpoint(args.checkpoint)
        if args.kind == "vanilla":
            ckpt = pipeline.train_baseline_vanilla(cfg, base, mode=args.mode,
                                                   seed=args.seed, budget=args.steps,
                                                   out=args.out, log_csv=args.log_csv)
        else:
            ckpt = pipeline.train_baseline_explicit(cfg, base, seed=args.seed,
                                                    budget=args.steps, out=args.out,
                                                    log_csv=args.log_csv)
        print(f"stage={ckpt.stage} steps={ckpt.train_steps} -> {args.out or '(not saved)'}")
        return 0

    if args.command == "eval":
        ckpt = load_checkpoint(args.checkpoint)
        policy = load_policy(ckpt)
        episodes = args.episodes or cfg.evaluation.episodes
        seed = cfg.evaluation.seed if args.seed is None else args.seed
        writer = open(args.log_ndjson, "w") if args.log_ndjson else None
        try:
            report = evaluate(policy, cfg, n_episodes=episodes, seed=seed,
                              mode=args.mode or ckpt.mode,
                              policy_id=f"{ckpt.stage}:{ckpt.mode}",
                              log_writer=writer)
        finally:
            if writer:
                writer.close()
        print(f"lin_vel_err={report.lin_vel_err:.4f} m/s  "
              f"ang_vel_err={report.ang_vel_err:.4f} rad/s  "
              f"height_err={report.height_err:.4f} m  "
              f"avg_ef={report.avg_ef:.3f} N  "
              f"(completed {report.completed}/{report.episodes}, "
              f"early {report.early_terminated}, diverged {report.diverged})")
        if args.out:
            emit_report([report], args.out, fmt=args.format)
            print(f"report -> {args.out}")
        return 0

    if args.command == "ramp":
        ckpt = load_checkpoint(args.checkpoint)
        policy = load_policy(ckpt)
        trace = force_ramp_experiment(policy, cfg, f_max=args.force_max,
                                      duration=args.duration,
                                      mode=args.mode or "follower")
        thr = compliance_threshold(trace, v_move=cfg.evaluation.move_speed_threshold,
                                   smooth_window_s=cfg.evaluation.smoothing_window_s)
        label = "no-follow" if thr is None else f"{thr:.2f} N"
        print(f"compliance threshold: {label} (peak speed "
              f"{float(np.max(trace.base_speed)):.3f} m/s)")
        if args.out:
            _dump_trace(trace, args.out)
            print(f"trace -> {args.out}")
        return 0

    if args.command == "lift":
        ckpt = load_checkpoint(args.checkpoint)
        policy = load_policy(ckpt)
        forces = args.forces or cfg.evaluation.lift_forces
        traces = {}
        for f in forces:
            tr = vertical_force_experiment(policy, cfg, per_hand_force=f,
                                           duration=args.duration,
                                           mode=args.mode or "follower")
            half = len(tr.t) // 2
            offset = float(np.mean(tr.base_height[half:])) - cfg.physics.nominal_leg
            traces[f] = tr
            print(f"{f:.0f} N per hand -> steady height offset {offset:+.4f} m")
        if args.out:
            _dump_trace(traces[forces[-1]], args.out)
            print(f"trace ({forces[-1]} N) -> {args.out}")
        return 0

    if args.command == "serve":
        scfg = SessionConfig(checkpoint_path=args.checkpoint,
                             mode=args.mode or "follower",
                             host=args.host or cfg.serve.host,
                             port=args.port if args.port is not None else cfg.serve.port,
                             physics_hz=cfg.serve.physics_hz,
                             policy_hz=cfg.serve.policy_hz,
                             broadcast_hz=cfg.serve.broadcast_hz,
                             input_time_constant_s=cfg.serve.input_time_constant_s)
        run_server(cfg, scfg)
        return 0

    raise AssertionError(f"unhandled command {args.command}")


def _dump_trace(trace, path):
    with open(path, "w") as f:
        for k in range(len(trace.t)):
            f.write(json.dumps({
                "t": round(float(trace.t[k]), 4),
                "force": round(float(trace.applied_force[k]), 4),
                "speed": round(float(trace.base_speed[k]), 5),
                "height": round(float(trace.base_height[k]), 5),
            }) + "\n")


if __name__ == "__main__":
    sys.exit(main())
