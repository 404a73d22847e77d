"""Command line interface: simulate, segment, act, run, eval."""
from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from . import fileio
from .action import find_action
from .config import EpisodeConfig, apply_overrides, load_config, parse_assignments, save_config
from .errors import RtRisegError
from .flow import Intrinsics
from .metrics import format_report
from .runner import (evaluate_dirs, load_record, run_episode, save_masks, save_record,
                     save_result, segment_record, simulate_episode)


def _config(args) -> EpisodeConfig:
    cfg = load_config(args.config) if args.config else EpisodeConfig()
    return apply_overrides(cfg, parse_assignments(args.set))


def _with(cfg: EpisodeConfig, **kw) -> EpisodeConfig:
    kw = {k: v for k, v in kw.items() if v is not None}
    return dataclasses.replace(cfg, **kw) if kw else cfg


def _write_report(rows, out: Path, threshold: float, xlabel: str) -> str:
    from .plotting import plot_correct_rate, plot_final_prf

    text = format_report(rows)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.txt").write_text(text)
    plot_correct_rate(rows, out / "correct_rate.png", threshold, xlabel)
    plot_final_prf(rows, out / "prf.png")
    return text


def cmd_simulate(args) -> int:
    cfg = _with(_config(args), scene=args.scene, max_interactions=args.interactions)
    cfg = cfg.seeded(args.seed if args.seed is not None else cfg.seed)
    rec = simulate_episode(cfg)
    save_record(rec, args.out)
    print(f"wrote {len(rec)} frames, {len(rec.actions)} interactions to {args.out}")
    return 0


def cmd_segment(args) -> int:
    cfg = _with(_config(args), flow_noise=args.noise)
    prefix = "gtflow" if args.flow == "gt" else args.flow_prefix
    rec = load_record(args.episode, flow_prefix=prefix)
    cfg = dataclasses.replace(cfg, camera=rec.k)
    masks, prompts = segment_record(rec, cfg)
    save_masks(masks, prompts, args.out)
    ids = sorted(set(int(i) for i in masks[-1].ravel() if i > 0))
    print(f"segmented {len(masks)} frames; final object ids: {ids}")
    return 0


def _intrinsics_near(frame: Path, cfg: EpisodeConfig) -> Intrinsics:
    meta = frame.parent / "episode.txt"
    if not meta.exists():
        return cfg.camera
    m = fileio.read_keyvalue(meta)
    return Intrinsics(float(m["fx"]), float(m["fy"]), float(m["cx"]), float(m["cy"]),
                      int(m["width"]), int(m["height"]))


def cmd_act(args) -> int:
    cfg = _config(args)
    frame = Path(args.frame)
    k = _intrinsics_near(frame, cfg)
    depth = fileio.read_pfm(frame)
    labels = fileio.read_pgm(args.mask)
    a = find_action(labels, depth, k, cfg.action)
    print(a.record() if a else "none")
    return 0


def cmd_run(args) -> int:
    base = _with(_config(args), scene=args.scene, max_interactions=args.interactions,
                 flow_noise=args.noise)
    seeds = args.seed if args.seed else [base.seed]
    out = Path(args.out)
    rows = []
    for seed in seeds:
        cfg = base.seeded(seed)
        res = run_episode(cfg)
        name = res.name if len(seeds) == 1 or not cfg.scene else f"{res.name}_seed{seed}"
        res.name = name
        rows.extend(dataclasses.replace(r, scene=name) for r in res.rows)
        save_result(res, out / name, cfg)
    save_config(out / "config.txt", base)
    text = _write_report(rows, out, base.eval.correct_threshold, "interaction step")
    sys.stdout.write(text)
    return 0


def cmd_eval(args) -> int:
    cfg = _config(args)
    ev = cfg.eval
    rows = evaluate_dirs(args.pred, args.gt, threshold=ev.correct_threshold,
                         dilation=ev.boundary_dilation, pattern=args.pattern)
    text = format_report(rows)
    if args.out:
        text = _write_report(rows, Path(args.out), ev.correct_threshold, "frame")
    sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rtriseg", description="Model-free interactive segmentation.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value config file")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override one config value (repeatable)")
    sub = p.add_subparsers(dest="cmd", required=True)

    s = sub.add_parser("simulate", parents=[common], help="record an episode without segmentation")
    s.add_argument("--scene", help="scene file (default: random scene from --seed)")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--interactions", type=int)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("segment", parents=[common], help="segment a recorded episode")
    s.add_argument("--episode", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--flow", choices=("gt", "external"), default="gt")
    s.add_argument("--flow-prefix", default="flow",
                   help="file prefix of external flow, read as PREFIX_NNNN.flo")
    s.add_argument("--noise", type=float, help="std of Gaussian noise added to the flow (px)")
    s.set_defaults(func=cmd_segment)

    s = sub.add_parser("act", parents=[common], help="select one push")
    s.add_argument("--mask", required=True, help="16-bit PGM label mask")
    s.add_argument("--frame", required=True, help="PFM depth frame")
    s.set_defaults(func=cmd_act)

    s = sub.add_parser("run", parents=[common], help="full interact-and-segment loop with report")
    s.add_argument("--scene")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, nargs="+")
    s.add_argument("--interactions", type=int)
    s.add_argument("--noise", type=float)
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("eval", parents=[common], help="score predicted masks against GT")
    s.add_argument("--pred", required=True)
    s.add_argument("--gt", required=True)
    s.add_argument("--out", help="write report.txt and figures here")
    s.add_argument("--pattern", default="mask_*.pgm")
    s.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (RtRisegError, ValueError, KeyError, FileNotFoundError) as e:
        print(f"rtriseg {args.cmd}: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
