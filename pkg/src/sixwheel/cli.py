"""Command-line entry point: simulate, train, lane-detect, plot."""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from .pgm import PGMError, atomic_write_bytes, read_pgm, write_pgm
from .plots import KINDS, PlotError, read_run_csv, render_svg
from .qtuner import TunerState, train, tuner_from_json, tuner_to_json
from .scenario import PRESETS, Scenario, ScenarioError, load_scenario, preset_path
from .sim import run_scenario, summarize
from .vision import BoundaryNotFound, LaneDetector, ParallelLinesError, annotate

log = logging.getLogger("sixwheel")

EXIT_OK, EXIT_INPUT, EXIT_IO = 0, 1, 2


class InputError(Exception):
    """Malformed user input; maps to exit code 1."""


def _setup_logging() -> None:
    level = os.environ.get("SIXWHEEL_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=levels.get(level, logging.ERROR), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def _resolve_scenario(arg: str) -> Path:
    p = Path(arg)
    if not p.exists() and arg in PRESETS:
        return preset_path(arg)
    return p


def _load(arg: str, seed: Optional[int]) -> Scenario:
    sc = load_scenario(_resolve_scenario(arg))
    if seed is not None:
        sc = dataclasses.replace(sc, seed=seed)
    return sc


def _write_text(path: Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def cmd_simulate(args) -> int:
    sc = _load(args.scenario, args.seed)
    controller = None
    if args.params:
        params, _, _ = _read_tuner(args.params)
        controller = params.to_controller(sc.controller)
    runlog = run_scenario(sc, controller)
    _write_text(Path(args.out), runlog.to_csv())
    if args.figures:
        cols = read_run_csv(runlog.to_csv())
        fig_dir = Path(args.figures)
        fig_dir.mkdir(parents=True, exist_ok=True)
        stem = Path(args.out).stem
        for kind in KINDS:
            svg = render_svg(cols, kind, sc.path, title=f"{sc.name}: {kind}")
            atomic_write_bytes(fig_dir / f"{stem}_{kind}.svg", svg)
    stats = summarize(runlog, sc.path)
    print(f"scenario={sc.name}")
    print(f"seed={sc.seed}")
    for key in ("ticks", "max_lateral", "final_lateral", "min_obstacle", "max_pitch"):
        print(f"{key}={_fmt(stats[key])}")
    return EXIT_OK


def _read_tuner(path: str):
    text = Path(path).read_text(encoding="utf-8")
    try:
        return tuner_from_json(text)
    except (ValueError, json.JSONDecodeError) as exc:
        raise InputError(f"{path}: {exc}") from exc


def cmd_train(args) -> int:
    if args.episodes < 1:
        raise InputError("--episodes must be >= 1")
    sc = _load(args.scenario, args.seed)
    cfg = sc.tuner
    tuner = None
    if args.params:
        params, q, cfg = _read_tuner(args.params)
        tuner = TunerState(params, q, np.random.default_rng(sc.seed), cfg.epsilon)
    if args.epsilon is not None:
        if not 0.0 <= args.epsilon <= 1.0:
            raise InputError("--epsilon must lie in [0, 1]")
        cfg = dataclasses.replace(cfg, epsilon=args.epsilon)
        if tuner is not None:
            tuner.epsilon = args.epsilon
    out = Path(args.out)
    if not out.parent.exists():
        raise OSError(f"output directory {out.parent} does not exist")
    print("episode,ise")
    tuner, _ = train(sc, args.episodes, sc.seed, tuner, cfg,
                     on_episode=lambda ep, ise: print(f"{ep},{ise:.6f}", flush=True))
    _write_text(out, tuner_to_json(tuner, cfg))
    return EXIT_OK


def cmd_lane_detect(args) -> int:
    try:
        img = read_pgm(args.image)
    except PGMError as exc:
        raise InputError(f"{args.image}: {exc}") from exc
    det = LaneDetector()
    if args.params:
        try:
            det = LaneDetector.from_json(json.loads(Path(args.params).read_text(encoding="utf-8")))
        except (ValueError, TypeError) as exc:
            raise InputError(f"{args.params}: {exc}") from exc
    try:
        est, left, right = det.detect_lines(img)
    except (BoundaryNotFound, ParallelLinesError) as exc:
        log.info("no lane boundary: %s", exc)
        print("NO_BOUNDARY")
        return EXIT_OK
    u, v = est.vanishing_point
    print("lateral_px,heading_deg,vp_u,vp_v")
    print(f"{est.lateral_px:.6f},{est.offsets.heading:.6f},{u:.6f},{v:.6f}")
    if args.out:
        write_pgm(args.out, annotate(img, left, right, est.vanishing_point))
    return EXIT_OK


def cmd_plot(args) -> int:
    text = Path(args.csv).read_text(encoding="utf-8")
    try:
        cols = read_run_csv(text)
    except PlotError as exc:
        raise InputError(f"{args.csv}: {exc}") from exc
    path = _load(args.scenario, None).path if args.scenario else None
    try:
        svg = render_svg(cols, args.kind, path)
    except PlotError as exc:
        raise InputError(str(exc)) from exc
    atomic_write_bytes(Path(args.out), svg)
    print(f"kind={args.kind}")
    print(f"points={len(cols['t'])}")
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    # usage errors are malformed input, keeping exit code 2 for I/O failures
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    p = _Parser(prog="sixwheel", description=__doc__, formatter_class=fmt)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    scen_help = f"scenario JSON file or preset name ({', '.join(PRESETS)})"

    s = sub.add_parser("simulate", help="run a scenario and write its CSV log", formatter_class=fmt)
    s.add_argument("--scenario", required=True, help=scen_help)
    s.add_argument("--out", required=True, help="CSV log path")
    s.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    s.add_argument("--params", default=None, help="tuner JSON whose learned parameters drive the controller")
    s.add_argument("--figures", default=None, help="directory for SVG figures of the run")
    s.set_defaults(func=cmd_simulate)

    t = sub.add_parser("train", help="tune the controller with Q-learning", formatter_class=fmt)
    t.add_argument("--scenario", required=True, help=scen_help)
    t.add_argument("--episodes", type=int, default=200, help="training episodes")
    t.add_argument("--out", required=True, help="tuner JSON output path")
    t.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    t.add_argument("--params", default=None, help="tuner JSON to continue from")
    t.add_argument("--epsilon", type=float, default=None, help="override the exploration rate")
    t.set_defaults(func=cmd_train)

    d = sub.add_parser("lane-detect", help="find lane boundaries in a PGM image", formatter_class=fmt)
    d.add_argument("image", help="binary PGM (P5) image")
    d.add_argument("--params", default=None, help="detector JSON (canny, hough, focal_px, ...)")
    d.add_argument("--out", default=None, help="annotated PGM output path")
    d.set_defaults(func=cmd_lane_detect)

    g = sub.add_parser("plot", help="render an SVG figure from a CSV log", formatter_class=fmt)
    g.add_argument("csv", help="run log written by simulate")
    g.add_argument("--kind", default="trajectory", help=f"figure type: {', '.join(KINDS)}")
    g.add_argument("--out", required=True, help="SVG output path")
    g.add_argument("--scenario", default=None, help="scenario whose path is drawn under the trajectory")
    g.set_defaults(func=cmd_plot)
    return p


def main(argv: Optional[list] = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InputError, ScenarioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    raise SystemExit(main())
