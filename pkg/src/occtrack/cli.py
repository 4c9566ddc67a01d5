"""Command-line entry points.

Subcommands:

    occtrack synth  --out DIR [--seed N] [--spec FILE] [--occluder] ...
    occtrack track  SEQ_DIR [--config FILE] [--traj FILE] [--diag FILE]
                    [--dump-frames DIR] [--dump-model FILE]
                    [--no-occlusion-handling]
    occtrack eval   SEQ_DIR TRAJ_FILE [--out FILE]
    occtrack ablate SEQ_DIR [--config FILE] [--out FILE]
    occtrack sweep-alpha SEQ_DIR [--alphas LIST] [--config FILE] [--out FILE]

All subcommands exit 0 on success and nonzero with a message on stderr when
the run fails.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .dcf import dump_model
from .errors import TrackError
from .harness import (
    RunResult,
    SynthSpec,
    dump_annotated_frames,
    evaluate,
    load_config,
    load_sequence,
    parse_flat_config,
    read_trajectory,
    recovery_score,
    run_tracker,
    save_sequence,
    synth_sequence,
    write_diagnostics,
    write_trajectory,
)
from .tracker import TrackerConfig


def _load_cfg(args) -> TrackerConfig:
    cfg = load_config(args.config) if args.config else TrackerConfig()
    if getattr(args, "no_occlusion_handling", False):
        cfg.occlusion_handling = False
    return cfg


def _cmd_synth(args) -> int:
    if args.spec:
        spec = SynthSpec.from_dict(parse_flat_config(args.spec))
    else:
        spec = SynthSpec(occluder=args.occluder, zoom=args.zoom, vx=args.vx, vy=args.vy)
    seq = synth_sequence(spec, args.seed)
    save_sequence(seq, args.out)
    print(f"wrote {len(seq)} frames to {args.out}")
    return 0


def _cmd_track(args) -> int:
    seq = load_sequence(args.sequence)
    cfg = _load_cfg(args)
    result = run_tracker(seq, cfg)
    report = evaluate(result.trajectory, seq.gt, result.diagnostics, result.fps)
    if args.traj:
        write_trajectory(result.trajectory, args.traj)
    if args.diag:
        write_diagnostics(result.diagnostics, args.diag)
    if args.dump_frames:
        dump_annotated_frames(seq, result, args.dump_frames)
    if args.dump_model:
        from .tracker import init  # late import keeps startup light

        state = init(seq.frame(0), seq.gt[0], cfg)
        dump_model(state.f_0, args.dump_model)
    print(report.format_table())
    return 0


def _cmd_eval(args) -> int:
    seq = load_sequence(args.sequence)
    trajectory = read_trajectory(args.trajectory)
    report = evaluate(trajectory, seq.gt)
    print(report.format_table())
    if args.out:
        Path(args.out).write_text(json.dumps(report.to_json_dict(), indent=2) + "\n")
    return 0


def _cmd_ablate(args) -> int:
    seq = load_sequence(args.sequence)
    rows = {}
    for label, handling in (("with_occlusion_handling", True), ("without", False)):
        cfg = load_config(args.config) if args.config else TrackerConfig()
        cfg.occlusion_handling = handling
        result = run_tracker(seq, cfg)
        report = evaluate(result.trajectory, seq.gt, result.diagnostics, result.fps)
        rows[label] = {
            "mean_iou": float(np.mean(report.ious)) if report.ious else 0.0,
            "auc": report.auc,
            "precision_20px": report.precision_20px,
            "recovery": recovery_score(seq, report),
            "fps": report.fps,
        }
        print(f"{label:>26}: mean IoU {rows[label]['mean_iou']:.4f}  "
              f"AUC {rows[label]['auc']:.4f}  recovery {rows[label]['recovery']:.4f}")
    if args.out:
        Path(args.out).write_text(json.dumps(rows, indent=2) + "\n")
    return 0


def _cmd_sweep_alpha(args) -> int:
    seq = load_sequence(args.sequence)
    alphas = [float(v) for v in args.alphas.split(",")]
    rows = {}
    for a in alphas:
        cfg = load_config(args.config) if args.config else TrackerConfig()
        cfg.quality.alpha = a
        result = run_tracker(seq, cfg)
        report = evaluate(result.trajectory, seq.gt, result.diagnostics, result.fps)
        rows[f"{a:g}"] = {
            "mean_iou": float(np.mean(report.ious)) if report.ious else 0.0,
            "recovery": recovery_score(seq, report),
        }
        print(f"alpha={a:<6g} mean IoU {rows[f'{a:g}']['mean_iou']:.4f}  "
              f"recovery {rows[f'{a:g}']['recovery']:.4f}")
    if args.out:
        Path(args.out).write_text(json.dumps(rows, indent=2) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="occtrack", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("synth", help="render a synthetic sequence to disk")
    ps.add_argument("--out", required=True, help="output sequence directory")
    ps.add_argument("--seed", type=int, default=0)
    ps.add_argument("--spec", help="key=value file of SynthSpec fields")
    ps.add_argument("--occluder", action="store_true")
    ps.add_argument("--zoom", type=float, default=1.0)
    ps.add_argument("--vx", type=float, default=0.5)
    ps.add_argument("--vy", type=float, default=0.0)
    ps.set_defaults(func=_cmd_synth)

    pt = sub.add_parser("track", help="run the tracker over a sequence")
    pt.add_argument("sequence", help="sequence directory")
    pt.add_argument("--config", help="key=value tracker config file")
    pt.add_argument("--traj", help="write predicted boxes here")
    pt.add_argument("--diag", help="write JSON-lines diagnostics here")
    pt.add_argument("--dump-frames", help="write annotated PNGs here")
    pt.add_argument("--dump-model", help="serialize the initial filter here")
    pt.add_argument("--no-occlusion-handling", action="store_true")
    pt.set_defaults(func=_cmd_track)

    pe = sub.add_parser("eval", help="score a saved trajectory")
    pe.add_argument("sequence")
    pe.add_argument("trajectory")
    pe.add_argument("--out", help="write the JSON report here")
    pe.set_defaults(func=_cmd_eval)

    pa = sub.add_parser("ablate", help="compare with vs. without occlusion handling")
    pa.add_argument("sequence")
    pa.add_argument("--config")
    pa.add_argument("--out")
    pa.set_defaults(func=_cmd_ablate)

    pw = sub.add_parser("sweep-alpha", help="rerun across quality exponents")
    pw.add_argument("sequence")
    pw.add_argument("--alphas", default="1,1.5,2,2.5,3.5,5,9")
    pw.add_argument("--config")
    pw.add_argument("--out")
    pw.set_defaults(func=_cmd_sweep_alpha)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except TrackError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
