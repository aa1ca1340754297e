"""Command-line harness: simulate, detect, eval, bench, closedloop and batch."""
from __future__ import annotations

import argparse
import glob
import math
import sys
from pathlib import Path

import numpy as np

from . import reports
from .config import PipelineConfig, load_config
from .detection import RobotKinematicState
from .evaluation import (closed_loop_run, detection_metrics, detection_trace, direction_error,
                         gt_direction_trace, latency_benchmark, match_detections,
                         matched_flow_trace, run_pipeline, script_states)
from .events import StreamFormatError, read_stream, write_stream
from .flow import I_PAST, N_ROT
from .pipeline import Pipeline
from .events import package_stream
from .sim.script import load_script
from .sim.simulator import simulate


def _outdir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _states(args):
    if getattr(args, "script", None):
        return script_states(load_script(args.script))
    st = RobotKinematicState(v_z=args.vz, omega_x=args.omega)
    return lambda pkg: st


def _finish(out: Path, rows, title: str) -> None:
    table = reports.format_table(rows, title)
    (out / "summary.txt").write_text(table)
    sys.stdout.write(table)


def cmd_simulate(args, cfg: PipelineConfig) -> int:
    script = load_script(args.script)
    out = _outdir(args.output)
    chunk = simulate(script)
    ext = ".bin" if args.format == "bin" else ".csv"
    write_stream(out / f"events{ext}", script.geometry, chunk.events, fmt=args.format)
    reports.write_labels(out / "labels.csv", chunk.labels)
    reports.write_ground_truth(out / "ground_truth.csv", chunk.ground_truth)
    n_obj = int((chunk.labels >= 0).sum())
    _finish(out, [("events", len(chunk.events)), ("obstacle events", n_obj),
                  ("background events", int((chunk.labels == -1).sum())),
                  ("noise events", int((chunk.labels == -2).sum())),
                  ("isv", bool(chunk.ground_truth["isv"].any()))], f"simulate {args.script}")
    return 0


def _detect(events, geometry, cfg, states, dump_slices: Path | None = None):
    pipe = Pipeline(geometry, cfg)
    results = []
    last_rot = 0
    for pkg in package_stream(events, cfg.package_rate):
        results.append(pipe.process(pkg, states(pkg), keep_frontend=True))
        if dump_slices is not None and pipe.ring.meta[N_ROT] != last_rot:
            last_rot = int(pipe.ring.meta[N_ROT])
            reports.write_pgm(dump_slices / f"slice_{pkg.seq:06d}.pgm",
                              pipe.ring.slices[pipe.ring.meta[I_PAST]])
    return results


def cmd_detect(args, cfg: PipelineConfig) -> int:
    geometry, events = read_stream(args.events)
    out = _outdir(args.output)
    slices = None
    if args.slices:
        slices = _outdir(out / "slices")
    results = _detect(events, geometry, cfg, _states(args), slices)
    reports.write_cluster_trace(out / "clusters.csv", results)
    reports.write_command_log(out / "commands.csv", reports.command_rows(results))
    if args.dump:
        reports.write_debug_dump(out / "debug.csv", events, results)
    n_dyn = sum(r.n_dynamic for r in results)
    _finish(out, [("events", len(events)), ("packages", len(results)),
                  ("dynamic fraction", n_dyn / len(events) if len(events) else None),
                  ("corner events", sum(r.n_corner for r in results)),
                  ("flow samples", sum(r.n_flow for r in results)),
                  ("packages with risk", sum(r.risk for r in results))], f"detect {args.events}")
    return 0


def evaluate_run(events, geometry, gt, cfg, states, band=None):
    results = run_pipeline(events, geometry, cfg, states)
    counts = match_detections(detection_trace(results), gt, depth_band=band)
    stats = direction_error(matched_flow_trace(results, gt), gt_direction_trace(gt))
    return results, counts, stats


def cmd_eval(args, cfg: PipelineConfig) -> int:
    geometry, events = read_stream(args.events)
    gt = reports.read_ground_truth(args.gt)
    out = _outdir(args.output)
    band = tuple(args.band) if args.band else None
    results, c, stats = evaluate_run(events, geometry, gt, cfg, _states(args), band)
    reports.write_rows(out / "detections.csv", ["t_us", "cx", "cy"],
                       ((t, x, y) for t, dets in detection_trace(results) for x, y in dets))
    reports.write_cluster_trace(out / "clusters.csv", results)
    reports.write_rows(out / "confusion.csv", ["tp", "fp", "fn", "tn"], [(c.tp, c.fp, c.fn, c.tn)])
    m = detection_metrics(c)
    rows = [("tp", c.tp), ("fp", c.fp), ("fn", c.fn), ("tn", c.tn)] + list(m.items())
    if stats is not None:
        reports.write_rows(out / "direction.csv", ["error_deg"], ((e,) for e in stats.errors))
        rows += [("direction mean deg", stats.mean), ("direction std deg", stats.std),
                 ("direction rmse deg", stats.rmse), ("direction max deg", stats.max)]
    _finish(out, rows, f"eval {args.events}")
    return 0


def cmd_bench(args, cfg: PipelineConfig) -> int:
    geometry, events = read_stream(args.events)
    out = _outdir(args.output)
    rep, _ = latency_benchmark(events, geometry, cfg, args.reps, _states(args))
    reports.write_rows(out / "latency.csv", ["package", "time_us"], enumerate(rep.per_package_us))
    rows = [("packages", rep.n_packages), ("events", rep.n_events),
            ("mean us", rep.mean_us), ("p95 us", rep.p95_us), ("max us", rep.max_us)]
    rows += [(k, v) for k, v in rep.machine.items()]
    _finish(out, rows, f"bench {args.events} (min of {args.reps} reps)")
    return 0


def cmd_closedloop(args, cfg: PipelineConfig) -> int:
    script = load_script(args.script)
    out = _outdir(args.output)
    res = closed_loop_run(script, cfg, avoid=not args.no_avoid)
    reports.write_command_log(out / "commands.csv", res.log)
    _finish(out, [("outcome", res.outcome), ("isv", res.isv), ("collided", res.collided),
                  ("maneuver", res.maneuver)], f"closedloop {args.script}")
    return 0


def cmd_batch(args, cfg: PipelineConfig) -> int:
    paths = sorted(glob.glob(args.scripts))
    if not paths:
        print(f"no scripts match {args.scripts!r}", file=sys.stderr)
        return 2
    out = _outdir(args.output)
    rows = []
    total = None
    for p in paths:
        script = load_script(p)
        chunk = simulate(script)
        _, c, stats = evaluate_run(chunk.events, script.geometry, chunk.ground_truth, cfg,
                                   script_states(script))
        total = c if total is None else total + c
        off = closed_loop_run(script, cfg, avoid=False)
        on = closed_loop_run(script, cfg, avoid=True)
        rows.append((Path(p).name, c.tp, c.fp, c.fn, c.tn,
                     stats.rmse if stats is not None else math.nan,
                     off.outcome, on.outcome, int(on.maneuver)))
    reports.write_rows(out / "runs.csv", ["script", "tp", "fp", "fn", "tn", "direction_rmse_deg",
                                          "outcome_off", "outcome_on", "maneuver"], rows)
    isv = [r for r in rows if r[6] == "collided"]
    clear = [r for r in rows if r[6] == "no-ISV"]
    m = detection_metrics(total)
    summary = [("scripts", len(rows))] + list(m.items())
    summary += [("isv runs", len(isv)),
                ("avoidance success", (sum(r[7] == "avoided" for r in isv) / len(isv)) if isv else None),
                ("no-isv runs", len(clear)),
                ("unnecessary maneuvers", (sum(r[8] for r in clear) / len(clear)) if clear else None)]
    _finish(out, summary, f"batch {args.scripts}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="evavoid", description=__doc__)
    ap.add_argument("--config", help="INI file with pipeline parameters")
    sub = ap.add_subparsers(dest="command", required=True)

    def state_opts(p):
        p.add_argument("--script", help="scene script supplying the robot state per package")
        p.add_argument("--vz", type=float, default=0.0, help="forward speed, m/s (no --script)")
        p.add_argument("--omega", type=float, default=0.0, help="pitch rate, rad/s (no --script)")

    p = sub.add_parser("simulate", help="render a scene script into events and ground truth")
    p.add_argument("script")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--format", choices=("csv", "bin"), default="csv")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("detect", help="run the pipeline over an event stream")
    p.add_argument("events")
    p.add_argument("-o", "--output", default="detect_out")
    p.add_argument("--dump", action="store_true", help="per-event filter/corner debug CSV")
    p.add_argument("--slices", action="store_true", help="PGM of the past slice after rotations")
    state_opts(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("eval", help="detection and direction metrics against ground truth")
    p.add_argument("events")
    p.add_argument("gt")
    p.add_argument("-o", "--output", default="eval_out")
    p.add_argument("--band", nargs=2, type=float, metavar=("ZMIN", "ZMAX"))
    state_opts(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="per-package latency of the full pipeline")
    p.add_argument("events")
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("-o", "--output", default="bench_out")
    state_opts(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("closedloop", help="fly a scene script with the pipeline in the loop")
    p.add_argument("script")
    p.add_argument("--no-avoid", action="store_true")
    p.add_argument("-o", "--output", default="closedloop_out")
    p.set_defaults(func=cmd_closedloop)

    p = sub.add_parser("batch", help="detection, direction and closed-loop runs over many scripts")
    p.add_argument("scripts", help="glob of scene scripts (quote it)")
    p.add_argument("-o", "--output", default="batch_out")
    p.set_defaults(func=cmd_batch)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except (StreamFormatError, ValueError, FileNotFoundError) as exc:
        print(f"evavoid: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
