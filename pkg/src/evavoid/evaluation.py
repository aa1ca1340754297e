"""Metrics: detection confusion counts, direction error, latency and closed-loop runs."""
from __future__ import annotations

import math
import platform
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .config import PipelineConfig
from .control import SafetyGeometry
from .events import EventPackage, SensorGeometry, package_stream
from .pipeline import PackageResult, Pipeline
from .sim.script import SceneScript
from .sim.simulator import GT_DTYPE, Simulator, isv_trace, nominal_state

DEFAULT_CADENCE = 25_000
DEFAULT_MATCH_ETA = 10.0


@dataclass
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp,
                               self.fn + other.fn, self.tn + other.tn)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def _ratio(num, den):
    return num / den if den else None


def detection_metrics(c: ConfusionCounts) -> dict[str, float | None]:
    """Accuracy, precision, TPR and FPR; a metric with a zero denominator is None."""
    return {"accuracy": _ratio(c.tp + c.tn, c.total),
            "precision": _ratio(c.tp, c.tp + c.fp),
            "tpr": _ratio(c.tp, c.tp + c.fn),
            "fpr": _ratio(c.fp, c.fp + c.tn)}


def greedy_match(dets, objs, match_eta: float) -> list[tuple[int, int, float]]:
    """Nearest-first pairing under the Manhattan gate; returns (det, obj, dist) triples."""
    pairs = []
    for i, (dx, dy) in enumerate(dets):
        for j, (ox, oy) in enumerate(objs):
            d = abs(dx - ox) + abs(dy - oy)
            if d <= match_eta:
                pairs.append((d, j, ox, oy, i))
    pairs.sort(key=lambda p: (p[0], p[1]))
    used_d, used_o, out = set(), set(), []
    for d, j, _, _, i in pairs:
        # detection order must not matter, so ties among detections break by position
        if i in used_d or j in used_o:
            continue
        used_d.add(i)
        used_o.add(j)
        out.append((i, j, d))
    return out


def _gt_frames(gt: np.ndarray):
    times = np.unique(gt["t"])
    return times


def gt_at(gt: np.ndarray, t: int) -> np.ndarray:
    times = _gt_frames(gt)
    if len(times) == 0:
        return gt[:0]
    k = int(np.clip(np.searchsorted(times, t), 0, len(times) - 1))
    if k > 0 and abs(times[k - 1] - t) <= abs(times[k] - t):
        k -= 1
    return gt[gt["t"] == times[k]]


def comparison_instants(t0: int, t1: int, cadence: int) -> np.ndarray:
    return np.arange(t0 + cadence, t1 + 1, cadence, dtype=np.int64)


def latest_entry(trace: Sequence[tuple[int, list]], t: int):
    """Latest ``(t_emit, items)`` emitted at or before ``t``, or None."""
    times = [tt for tt, _ in trace]
    k = int(np.searchsorted(times, t, side="right")) - 1
    return trace[k] if k >= 0 else None


def detections_at(trace: Sequence[tuple[int, list]], t: int) -> list:
    """Latest detection list emitted at or before ``t``."""
    e = latest_entry(trace, t)
    return list(e[1]) if e is not None else []


def match_detections(detections: Sequence[tuple[int, list]], gt: np.ndarray,
                     match_eta: float = DEFAULT_MATCH_ETA, cadence: int = DEFAULT_CADENCE,
                     depth_band: tuple[float, float] | None = None,
                     skip_truncated: bool = True, instants=None) -> ConfusionCounts:
    """Confusion counts over comparison instants every ``cadence`` us.

    ``detections`` is a time-ordered trace of ``(t_emit, [(cx, cy), ...])``.
    At each instant the most recent output is compared with the ground truth
    at its emission time (processing latency is benchmarked separately).
    Detections within ``match_eta`` (Manhattan) of a visible centroid are
    paired nearest first: pairs are TPs, unmatched detections FPs, unmatched
    visible objects FNs, and an instant with neither is a TN.

    With ``depth_band`` instants whose visible objects are not all inside the
    band are skipped; object-free instants still count (TN or FP). With
    ``skip_truncated`` instants where a silhouette is cut by the image border
    are not evaluated.
    """
    counts = ConfusionCounts()
    if instants is None:
        if len(gt) == 0:
            return counts
        instants = comparison_instants(int(gt["t"].min()), int(gt["t"].max()), cadence)
    for t in instants:
        entry = latest_entry(detections, int(t))
        t_ref, dets = (int(entry[0]), list(entry[1])) if entry is not None else (int(t), [])
        rows = gt_at(gt, t_ref)
        if skip_truncated and rows["truncated"].any():
            continue
        vis = rows[rows["visible"]]
        if depth_band is not None and len(vis):
            lo, hi = depth_band
            if not np.all((vis["z"] >= lo) & (vis["z"] <= hi)):
                continue
        objs = list(zip(vis["cx"].tolist(), vis["cy"].tolist()))
        if not dets and not objs:
            counts.tn += 1
            continue
        m = len(greedy_match(dets, objs, match_eta))
        counts.tp += m
        counts.fp += len(dets) - m
        counts.fn += len(objs) - m
    return counts


@dataclass
class DirectionStats:
    errors: np.ndarray   # degrees
    mean: float
    std: float
    rmse: float
    max: float


def angle_diff_deg(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = np.abs(np.degrees(np.asarray(a) - np.asarray(b))) % 360.0
    return np.where(d > 180.0, 360.0 - d, d)


def direction_error(flow_trace: Sequence[tuple[int, float, float]],
                    gt_trace: Sequence[tuple[int, float]],
                    cadence: int = DEFAULT_CADENCE) -> DirectionStats | None:
    """Absolute direction error (deg, in [0, 180]) of estimated mean flow vs ground truth.

    Each ``(t, vx, vy)`` estimate is paired with the nearest ground-truth
    ``(t, direction_rad)`` sample within half a cadence; unpaired estimates
    are dropped. Returns None when nothing pairs.
    """
    if not flow_trace or not gt_trace:
        return None
    gt_t = np.array([t for t, _ in gt_trace], dtype=np.int64)
    gt_d = np.array([d for _, d in gt_trace], dtype=float)
    order = np.argsort(gt_t, kind="stable")
    gt_t, gt_d = gt_t[order], gt_d[order]
    est, ref = [], []
    for t, vx, vy in flow_trace:
        k = int(np.clip(np.searchsorted(gt_t, t), 0, len(gt_t) - 1))
        if k > 0 and abs(gt_t[k - 1] - t) <= abs(gt_t[k] - t):
            k -= 1
        if abs(gt_t[k] - t) > cadence / 2 or not np.isfinite(gt_d[k]):
            continue
        est.append(math.atan2(vy, vx))
        ref.append(gt_d[k])
    if not est:
        return None
    err = angle_diff_deg(np.array(est), np.array(ref))
    return DirectionStats(err, float(err.mean()), float(err.std()),
                          float(np.sqrt(np.mean(err ** 2))), float(err.max()))


def run_pipeline(events: np.ndarray, geometry: SensorGeometry,
                 config: PipelineConfig = PipelineConfig(), states=None,
                 keep_frontend: bool = False) -> list[PackageResult]:
    """Replay a stream through a fresh pipeline at the configured package rate.

    ``states`` maps a package to the robot state used for its threshold
    (callable of the package); default is a state at rest. A ``SceneScript``
    may be passed instead to use its nominal trajectory.
    """
    from .detection import RobotKinematicState
    if isinstance(states, SceneScript):
        states = script_states(states)
    pipe = Pipeline(geometry, config)
    out = []
    for pkg in package_stream(events, config.package_rate):
        st = states(pkg) if states is not None else RobotKinematicState()
        out.append(pipe.process(pkg, st, keep_frontend=keep_frontend))
    return out


def script_states(script: SceneScript):
    """Package -> nominal robot state at the package start."""
    return lambda pkg: nominal_state(script, pkg.t_start * 1e-6)


def detection_trace(results: Sequence[PackageResult]) -> list[tuple[int, list]]:
    return [(r.t_end, [(e.cx, e.cy) for e in r.estimates]) for r in results]


def matched_flow_trace(results: Sequence[PackageResult], gt: np.ndarray,
                       match_eta: float = DEFAULT_MATCH_ETA,
                       cadence: int = DEFAULT_CADENCE) -> list[tuple[int, float, float]]:
    """Mean flow of the detection matched to the (first) visible object at each instant."""
    out = []
    if len(gt) == 0 or not results:
        return out
    trace = [(r.t_end, r.estimates) for r in results]
    for t in comparison_instants(int(gt["t"].min()), int(gt["t"].max()), cadence):
        rows = gt_at(gt, int(t))
        vis = rows[rows["visible"]]
        if not len(vis):
            continue
        ests = detections_at(trace, int(t))
        if not ests:
            continue
        pairs = greedy_match([(e.cx, e.cy) for e in ests],
                             list(zip(vis["cx"].tolist(), vis["cy"].tolist())), match_eta)
        for i, j, _ in pairs:
            if j == 0:
                out.append((int(t), ests[i].vx, ests[i].vy))
    return out


def gt_direction_trace(gt: np.ndarray, obj: int = 0) -> list[tuple[int, float]]:
    rows = gt[(gt["obj"] == obj) & gt["visible"]]
    return list(zip(rows["t"].tolist(), rows["dir"].tolist()))


@dataclass
class LatencyReport:
    per_package_us: np.ndarray
    mean_us: float
    p95_us: float
    max_us: float
    n_packages: int
    n_events: int
    machine: dict = field(default_factory=dict)


def machine_metadata() -> dict:
    return {"machine": platform.machine(), "processor": platform.processor(),
            "python": platform.python_version(), "system": platform.platform()}


def latency_benchmark(events: np.ndarray, geometry: SensorGeometry,
                      config: PipelineConfig = PipelineConfig(), repetitions: int = 5,
                      states=None) -> tuple[LatencyReport, list[PackageResult]]:
    """Per-package wall time of the full pipeline, min over ``repetitions`` replays."""
    from .detection import RobotKinematicState
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    packages = package_stream(events, config.package_rate)
    # compile the kernels outside the timed region
    Pipeline(geometry, config).process(EventPackage(events[:1], 0, 0))
    times = np.full((repetitions, len(packages)), np.inf)
    results = []
    for rep in range(repetitions):
        pipe = Pipeline(geometry, config)
        results = []
        for k, pkg in enumerate(packages):
            st = states(pkg) if states is not None else RobotKinematicState()
            t0 = time.perf_counter()
            results.append(pipe.process(pkg, st))
            times[rep, k] = time.perf_counter() - t0
    per = times.min(axis=0) * 1e6 if len(packages) else np.zeros(0)
    rep_ = LatencyReport(per, float(per.mean()) if len(per) else 0.0,
                         float(np.percentile(per, 95)) if len(per) else 0.0,
                         float(per.max()) if len(per) else 0.0,
                         len(packages), len(events), machine_metadata())
    return rep_, results


@dataclass
class ClosedLoopResult:
    outcome: str                 # "avoided", "collided" or "no-ISV"
    isv: bool                    # intersection on the unperturbed trajectory
    collided: bool               # intersection on the flown trajectory
    maneuver: bool               # a risk was flagged at least once
    commands: list = field(default_factory=list)   # (seq, t, risk, delta_e, delta_r)
    log: list = field(default_factory=list)        # per-package command-log rows


def with_known_radius(config: PipelineConfig, script: SceneScript) -> PipelineConfig:
    """Config whose obstacle radius R is the largest enclosing radius in the script."""
    if not script.obstacles:
        return config
    r = max(ob.radius for ob in script.obstacles)
    return config.replace(safety={"R": r})


def closed_loop_run(script: SceneScript, config: PipelineConfig = PipelineConfig(),
                    avoid: bool = True, known_radius: bool = True) -> ClosedLoopResult:
    """Fly the script with the pipeline in the loop.

    With ``avoid`` off the nominal trajectory is flown and the outcome follows
    the ISV trace alone. With it on, each package's command becomes a
    camera-frame acceleration through the surrogate dynamics (applied to the
    deviation from the nominal path) for the next package window. With
    ``known_radius`` the risk check uses the scripted obstacle's radius.
    """
    isv = bool(isv_trace(script).any())
    if not avoid:
        return ClosedLoopResult("collided" if isv else "no-ISV", isv, isv, False)
    if known_radius:
        config = with_known_radius(config, script)
    sim = Simulator(script)
    pipe = Pipeline(script.geometry, config)
    period = int(round(1e6 / config.package_rate))
    accel = np.zeros(3)
    seq = 0
    maneuver = False
    commands, log = [], []
    t = 0
    while not sim.done:
        state = sim.robot_state()
        t_next = t + period
        chunk = sim.advance(t_next, accel)
        res = pipe.process(EventPackage(chunk.events, seq, t_next, t), state)
        maneuver |= res.risk
        u = res.command
        accel = pipe.dynamics.acceleration(sim.perturbation_state(), np.array(u))
        commands.append((seq, t_next, res.risk, u.delta_e, u.delta_r))
        a = res.assessments[res.target] if res.target >= 0 else None
        log.append((seq, int(res.risk),
                    a.psi if a else math.nan, a.theta if a else math.nan,
                    a.psi_star if a else math.nan, a.theta_star if a else math.nan,
                    u.delta_e, u.delta_r))
        seq += 1
        t = t_next
    collided = sim.collided
    if collided:
        outcome = "collided"
    elif isv:
        outcome = "avoided"
    else:
        outcome = "no-ISV"
    return ClosedLoopResult(outcome, isv, collided, maneuver, commands, log)
