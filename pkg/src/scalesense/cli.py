"""Command line entry point ``scalesense``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .ba import run_region_ba
from .config import load_config
from .geometry import FrameLabel, read_trajectory, write_trajectory
from .pipeline import (evaluate_trajectories, format_suite_table, run_degenerate_suite, run_pipeline)
from .sim import ScenarioKind, generate, read_tracks, write_scenario

log = logging.getLogger("scalesense")


def _jsonable(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return _jsonable(obj.item())
    return obj


def _dump(obj, fh) -> None:
    json.dump(_jsonable(obj), fh, indent=2, allow_nan=False)
    fh.write("\n")


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    scen = dataclasses.replace(cfg.scenario, scenario_kind=ScenarioKind.parse(args.scenario), seed=args.seed)
    out = generate(scen)
    files = write_scenario(args.out_dir, out)
    for w in out.warnings:
        log.warning(w)
    print(f"wrote {', '.join(files.values())} and manifest.json to {args.out_dir}")
    return 0


def cmd_ba(args) -> int:
    tracks = read_tracks(args.tracks)
    bearing = None
    if args.bearing is not None:
        u, v = (float(x) for x in args.bearing.split(","))
        bearing = np.array([u, v, 1.0])
    result = run_region_ba(tracks, bearing, window_size=args.window)
    write_trajectory(args.out, result.object_camera_upscale)
    n_bad = sum(not r.converged for r in result.reports)
    print(f"wrote {len(result.object_camera_upscale)} object-in-camera poses to {args.out}"
          + (f" ({n_bad} windows did not converge)" if n_bad else ""))
    return 0


def cmd_estimate(args) -> int:
    cfg = load_config(args.config)
    cam = read_trajectory(args.camera, FrameLabel.CAMERA, FrameLabel.WORLD)
    obj = read_trajectory(args.object, FrameLabel.OBJECT, FrameLabel.CAMERA)
    truth = read_trajectory(args.truth, FrameLabel.OBJECT, FrameLabel.WORLD) if args.truth else None
    report = evaluate_trajectories(cam, obj, cfg.estimator, cfg.gate, truth, args.true_scale, mode="files")
    _dump(report.to_dict(), sys.stdout)
    return 0


def cmd_eval(args) -> int:
    cfg = load_config(args.config)
    report = run_pipeline(cfg)
    doc = report.to_dict()
    doc["config"] = cfg.to_dict()
    with open(args.out, "w", encoding="utf-8") as fh:
        _dump(doc, fh)
    if args.series:
        if report.stats is not None:
            report.write_series(args.series)
        else:
            Path(args.series).write_text("timestamp,err_x,err_y,err_z,err_yaw,err_pitch,err_roll\n")
    print(report.format_summary())
    return 0


def cmd_degenerate_suite(args) -> int:
    cfg = load_config(args.config)
    rows = run_degenerate_suite(cfg, range(args.seeds))
    table = format_suite_table(rows, cfg.scenario.true_scale)
    Path(args.out).write_text(table, encoding="utf-8")
    print(table, end="")
    return 0 if all(r.match for r in rows) else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="scalesense", description="Metric scale and world trajectory of a "
                                "moving object seen by a moving monocular camera.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="write a simulated scenario to a directory")
    s.add_argument("--scenario", default="RichMotion",
                   help="RichMotion, C1_MimicTranslation, C2_StaticCamera, C3_ConstantVelocityCamera, "
                        "C4_StaticRelativeObservation (or rich, c1..c4)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--config", help="JSON config whose scenario section sets the remaining parameters")
    s.set_defaults(func=cmd_simulate)

    b = sub.add_parser("ba", help="sliding-window region BA over a feature-track file")
    b.add_argument("--tracks", required=True)
    b.add_argument("--out", required=True, help="up-to-scale object-in-camera trajectory CSV")
    b.add_argument("--bearing", help="region centre in frame 0 as 'u,v' normalized coordinates "
                                     "(default: sidecar region centre, else centroid of frame-0 observations)")
    b.add_argument("--window", type=int, default=20)
    b.set_defaults(func=cmd_ba)

    e = sub.add_parser("estimate", help="closed-form scale and gate verdict from trajectory files")
    e.add_argument("--camera", required=True, help="camera-in-world trajectory CSV")
    e.add_argument("--object", required=True, help="up-to-scale object-in-camera trajectory CSV")
    e.add_argument("--truth", help="object-in-world ground truth CSV")
    e.add_argument("--true-scale", type=float, help="true scale, for the relative error")
    e.add_argument("--config")
    e.set_defaults(func=cmd_estimate)

    v = sub.add_parser("eval", help="run the simulated end-to-end pipeline and evaluate it")
    v.add_argument("--config")
    v.add_argument("--out", required=True, help="report JSON")
    v.add_argument("--series", help="per-timestamp error CSV")
    v.set_defaults(func=cmd_eval)

    d = sub.add_parser("degenerate-suite", help="verdict table for the degenerate motion cases")
    d.add_argument("--out", required=True, help="markdown table")
    d.add_argument("--seeds", type=int, default=10)
    d.add_argument("--config")
    d.set_defaults(func=cmd_degenerate_suite)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
