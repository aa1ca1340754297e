"""Per-package sense-and-avoid pipeline.

A package runs through the event-by-event front end (time filter, slice
accumulation, corner test, block-matching flow) inside one numba kernel;
the resulting flow samples are then clustered in order, and the valid
clusters go through risk evaluation and the tail controller.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .clustering import ClusterSet, ObjectEstimate
from .config import PipelineConfig
from .control import (ControlCommand, RiskAssessment, SurrogateDynamics, clamp_deflections,
                      evaluate_risk, reactive_command, refine_with_model)
from .detection import (CIRCLE3, CIRCLE4, PolaritySurfaces, RobotKinematicState,
                        SurfaceOfActiveEvents, classify_kernel, compute_tau, corner_kernel)
from .events import EventPackage, SensorGeometry
from .flow import CUR_N, D, I_CUR, STARTED, TAU_C, FlowSample, SliceRing, advance_kernel, flow_kernel, start_kernel

LABEL_STATIC, LABEL_DYNAMIC = 0, 1


@nb.njit(cache=True)
def frontend_kernel(xs, ys, ts, ps, tau, sae, pol, slices, meta, circle3, circle4,
                    d_min, d_max, lo, hi, rb, rs, ratio,
                    labels, corners, out_x, out_y, out_t, out_vx, out_vy, out_tauc):
    n_out = 0
    for k in range(ts.shape[0]):
        x = xs[k]
        y = ys[k]
        t = ts[k]
        if meta[STARTED] == 0:
            start_kernel(meta, t, meta[D])
        advance_kernel(slices, meta, t, d_min, d_max, lo, hi)
        dyn = classify_kernel(sae, x, y, t, tau)
        labels[k] = 1 if dyn else 0
        corners[k] = 0
        if not dyn:
            continue
        slices[meta[I_CUR], y, x] += 1
        meta[CUR_N] += 1
        if not corner_kernel(pol, x, y, t, ps[k], circle3, circle4):
            continue
        corners[k] = 1
        ok, vx, vy = flow_kernel(slices, meta, x, y, rb, rs, ratio)
        if ok:
            out_x[n_out] = x
            out_y[n_out] = y
            out_t[n_out] = t
            out_vx[n_out] = vx
            out_vy[n_out] = vy
            out_tauc[n_out] = meta[TAU_C]
            n_out += 1
    return n_out


@dataclass
class FrontendOutput:
    labels: np.ndarray
    corners: np.ndarray
    samples: np.ndarray  # columns x, y, ts, vx, vy, tau_c

    @property
    def n_dynamic(self) -> int:
        return int(self.labels.sum())

    @property
    def n_corner(self) -> int:
        return int(self.corners.sum())


@dataclass
class PackageResult:
    seq: int
    t_end: int
    tau: float
    n_events: int
    n_dynamic: int
    n_corner: int
    n_flow: int
    estimates: list[ObjectEstimate]
    assessments: list[RiskAssessment]
    risk: bool
    command: ControlCommand
    target: int = -1           # index into estimates driving the command
    frontend: FrontendOutput | None = field(default=None, repr=False)


class Pipeline:
    """Stateful sense-and-avoid pipeline for one sensor; feed packages in seq order."""

    def __init__(self, geometry: SensorGeometry, config: PipelineConfig = PipelineConfig(),
                 dynamics: SurrogateDynamics | None = None):
        self.geometry = geometry
        self.config = config
        self.sae = SurfaceOfActiveEvents(geometry.width, geometry.height)
        self.polarity = PolaritySurfaces(geometry.width, geometry.height)
        self.ring = SliceRing(geometry.width, geometry.height, config.flow)
        self.clusters = ClusterSet(config.cluster)
        if dynamics is None:
            path = config.control.dynamics_file
            dynamics = SurrogateDynamics.from_file(path) if path else SurrogateDynamics.default()
        self.dynamics = dynamics

    def reset(self):
        self.sae.reset()
        self.polarity.reset()
        self.ring.reset()
        self.clusters.reset()

    def run_frontend(self, events: np.ndarray, tau: float) -> FrontendOutput:
        n = len(events)
        fc = self.config.flow
        labels = np.zeros(n, dtype=np.int8)
        corners = np.zeros(n, dtype=np.int8)
        buf = np.empty((6, n), dtype=np.float64)
        out_t = np.empty(n, dtype=np.int64)
        out_tauc = np.empty(n, dtype=np.int64)
        m = 0
        if n:
            m = frontend_kernel(
                np.ascontiguousarray(events["x"], dtype=np.int64),
                np.ascontiguousarray(events["y"], dtype=np.int64),
                np.ascontiguousarray(events["ts"], dtype=np.int64),
                np.ascontiguousarray(events["p"], dtype=np.int64),
                float(tau), self.sae.grid, self.polarity.grid, self.ring.slices, self.ring.meta,
                CIRCLE3, CIRCLE4, fc.d_min, fc.d_max, fc.lo_watermark, fc.hi_watermark,
                fc.block_radius, fc.search_radius, fc.ambiguity_ratio,
                labels, corners, buf[0], buf[1], out_t, buf[3], buf[4], out_tauc)
        samples = np.column_stack([buf[0, :m], buf[1, :m], out_t[:m], buf[3, :m], buf[4, :m],
                                   out_tauc[:m]])
        return FrontendOutput(labels, corners, samples)

    def _cluster(self, samples: np.ndarray, t_end: int):
        cs = self.clusters
        for x, y, t, vx, vy, tau_c in samples.tolist():
            t = int(t)
            # drop expired samples first so a stale representative cannot fork a cluster
            cs.expire(t, int(tau_c))
            cs.assign(FlowSample(x, y, t, vx, vy), int(tau_c))
        cs.expire(t_end, self.ring.tau_c)

    def decide(self, estimates: list[ObjectEstimate], state: RobotKinematicState,
               z_measured=None) -> tuple[list[RiskAssessment], bool, ControlCommand, int]:
        cc = self.config.control
        lam = self.geometry.lam
        zs = z_measured if isinstance(z_measured, (list, tuple)) else [z_measured] * len(estimates)
        assessments = [evaluate_risk(est, cc.risk_mode, self.config.safety, lam, z)
                       for est, z in zip(estimates, zs)]
        risky = [i for i, a in enumerate(assessments) if a.risk]
        if not risky:
            return assessments, False, ControlCommand(0.0, 0.0), -1
        # nearest risky object first, then the best supported one
        target = min(risky, key=lambda i: (assessments[i].z if not math.isnan(assessments[i].z)
                                           else math.inf, -estimates[i].eta, i))
        est = estimates[target]
        u_react = reactive_command((est.vx, est.vy), cc.gains)
        direction = None
        if u_react == (0.0, 0.0):
            away = -np.array([math.sin(est.psi), math.sin(est.theta)])
            n = float(np.hypot(*away))
            direction = away / n if n > 0 else np.array([0.0, -1.0])
        u = refine_with_model(u_react, state, self.dynamics, math.radians(cc.grid_step_deg),
                              direction=direction, half_span=math.radians(cc.refine_span_deg))
        return assessments, True, clamp_deflections(u, cc.limits), target

    def process(self, package: EventPackage, state: RobotKinematicState = RobotKinematicState(),
                z_measured=None, keep_frontend: bool = False) -> PackageResult:
        tau = compute_tau(state, self.config.schedule)
        events = package.events
        fe = self.run_frontend(events, tau)
        t_end = int(package.t_emit)
        if len(events):
            t_end = max(t_end, int(events["ts"][-1]))
        self._cluster(fe.samples, t_end)
        estimates = self.clusters.estimates(self.geometry)
        assessments, risk, command, target = self.decide(estimates, state, z_measured)
        return PackageResult(package.seq, t_end, tau, len(events), fe.n_dynamic, fe.n_corner,
                             len(fe.samples), estimates, assessments, risk, command, target,
                             fe if keep_frontend else None)
