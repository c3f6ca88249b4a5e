"""Command line entry point: ``lanetow run|validate|version``."""

from __future__ import annotations

import argparse
import os
import sys

from . import __version__
from .harness import (FrameData, emit_metrics, emit_svg_plot, emit_trajectory_csv,
                      run_scenario)
from .ppm import write_ppm
from .scenario import ConfigError, builtin_scenario_path, load_scenario

EXIT_OK = 0
EXIT_CONFIG = 2


def _resolve(path: str) -> str:
    if os.path.exists(path):
        return path
    builtin = builtin_scenario_path(path)
    return builtin if os.path.exists(builtin) else path


class FrameDumper:
    """Writes every ``stride``-th camera frame, its lane mask and waypoints."""

    def __init__(self, out_dir: str, stride: int = 1):
        self.dir = os.path.join(out_dir, "frames")
        self.stride = stride
        os.makedirs(self.dir, exist_ok=True)
        self.rows = ["frame_index,i,bev_x_px,bev_y_px,global_x_m,global_y_m,psi2_rad"]

    def __call__(self, fd: FrameData) -> None:
        if fd.index % self.stride:
            return
        write_ppm(os.path.join(self.dir, f"frame_{fd.index:05d}.ppm"), fd.raw)
        write_ppm(os.path.join(self.dir, f"mask_{fd.index:05d}.ppm"), fd.mask)
        bev, glob = fd.plan.bev, fd.plan.waypoints
        if bev is None or glob is None:
            return
        for i, (pb, pg, psi) in enumerate(zip(bev.points, glob.points, glob.psi)):
            self.rows.append(f"{fd.index},{i},{pb[0]:.6f},{pb[1]:.6f},{pg[0]:.6f},{pg[1]:.6f},{psi:.6f}")

    def close(self) -> None:
        with open(os.path.join(self.dir, "waypoints.csv"), "w", encoding="ascii") as f:
            f.write("\n".join(self.rows) + "\n")


def cmd_run(args) -> int:
    try:
        cfg = load_scenario(_resolve(args.scenario))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if args.frame_stride < 1:
        print("config error: --frame-stride must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    os.makedirs(args.out, exist_ok=True)
    dumper = FrameDumper(args.out, args.frame_stride) if args.dump_frames else None
    report = run_scenario(cfg, dumper)
    if dumper is not None:
        dumper.close()
    emit_trajectory_csv(report, os.path.join(args.out, "trajectory.csv"))
    emit_svg_plot(report, os.path.join(args.out, "trajectory.svg"))
    emit_metrics(report, os.path.join(args.out, "metrics.txt"))
    if not args.no_figure:
        from .plotting import plot_run
        plot_run(report, os.path.join(args.out, "trajectory.png"))
    print(f"{cfg.name}: {report.status}, {len(report.records)} steps -> {args.out}")
    for key, val in report.metrics.items():
        print(f"  {key} = {val:.6f}" if isinstance(val, float) else f"  {key} = {val}")
    if report.message:
        print(report.message, file=sys.stderr)
    return report.exit_code


def cmd_validate(args) -> int:
    try:
        cfg = load_scenario(_resolve(args.scenario))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"{cfg.name}: ok ({cfg.steps} steps, {len(cfg.world.lanes)} lane(s))")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lanetow", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a scenario and write its outputs")
    run.add_argument("scenario", help="scenario file, or the name of a built-in scenario")
    run.add_argument("--out", default="out", help="output directory (default: out)")
    run.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    run.add_argument("--dump-frames", action="store_true", help="write camera frames and masks as PPM")
    run.add_argument("--frame-stride", type=int, default=1, help="dump every k-th frame")
    run.add_argument("--no-figure", action="store_true", help="skip the PNG summary figure")
    run.set_defaults(func=cmd_run)
    val = sub.add_parser("validate", help="check a scenario file")
    val.add_argument("scenario")
    val.set_defaults(func=cmd_validate)
    ver = sub.add_parser("version", help="print the package version")
    ver.set_defaults(func=lambda args: print(__version__) or EXIT_OK)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
