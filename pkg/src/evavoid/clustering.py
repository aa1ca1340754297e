"""Event-by-event clustering of flow samples.

Each cluster keeps its live samples in arrival order together with running
means of position and flow. Samples are added with the incremental mean
update and retired oldest-first with its inverse once older than the
cluster lifetime ``tau_c``.
"""
from __future__ import annotations

import math
import random
from collections import deque
from dataclasses import dataclass, field
from typing import NamedTuple

from .events import SensorGeometry
from .flow import FlowSample


@dataclass(frozen=True)
class ClusterConfig:
    rho: float = 100.0         # spatial gate, px; covers a Fitball footprint at 2 m
    min_samples: int = 8
    seed: int = 0


@dataclass
class FlowCluster:
    id: int
    phi: deque = field(default_factory=deque)
    cx: float = 0.0
    cy: float = 0.0
    vx: float = 0.0
    vy: float = 0.0
    bbox: tuple = (math.inf, math.inf, -math.inf, -math.inf)  # xmin, ymin, xmax, ymax
    last_update: int = 0

    @property
    def eta(self) -> int:
        return len(self.phi)

    @property
    def centroid(self) -> tuple[float, float]:
        return self.cx, self.cy

    @property
    def mean_flow(self) -> tuple[float, float]:
        return self.vx, self.vy

    def _recompute_bbox(self):
        if not self.phi:
            self.bbox = (math.inf, math.inf, -math.inf, -math.inf)
            return
        xs = [s.x for s in self.phi]
        ys = [s.y for s in self.phi]
        self.bbox = (min(xs), min(ys), max(xs), max(ys))


def add_flow(c: FlowCluster, f: FlowSample) -> tuple[float, float]:
    """Append ``f`` and fold it into the running means; returns the new mean flow."""
    n = c.eta
    a = n / (n + 1.0)
    b = 1.0 / (n + 1.0)
    if n == 0:
        c.vx, c.vy, c.cx, c.cy = f.vx, f.vy, f.x, f.y
    else:
        c.vx = a * c.vx + b * f.vx
        c.vy = a * c.vy + b * f.vy
        c.cx = a * c.cx + b * f.x
        c.cy = a * c.cy + b * f.y
    c.phi.append(f)
    xmin, ymin, xmax, ymax = c.bbox
    c.bbox = (min(xmin, f.x), min(ymin, f.y), max(xmax, f.x), max(ymax, f.y))
    c.last_update = max(c.last_update, f.ts)
    return c.vx, c.vy


def expire(c: FlowCluster, now: int, tau_c: int) -> bool:
    """Drop samples older than ``now - tau_c``; returns False once the cluster is empty."""
    limit = now - tau_c
    removed = False
    while c.phi and c.phi[0].ts < limit:
        old = c.phi.popleft()
        removed = True
        n = len(c.phi) + 1
        if n == 1:
            c.vx = c.vy = c.cx = c.cy = 0.0
            break
        a = n / (n - 1.0)
        b = 1.0 / (n - 1.0)
        c.vx = a * c.vx - b * old.vx
        c.vy = a * c.vy - b * old.vy
        c.cx = a * c.cx - b * old.x
        c.cy = a * c.cy - b * old.y
    if removed:
        c._recompute_bbox()
    return bool(c.phi)


class ObjectEstimate(NamedTuple):
    cluster_id: int
    cx: float
    cy: float
    vx: float
    vy: float
    L: float
    psi: float
    theta: float
    eta: int


def object_estimate(c: FlowCluster, geom: SensorGeometry, min_samples: int = 1) -> ObjectEstimate | None:
    """Centroid, mean flow, largest bbox side and pinhole bearing of a cluster."""
    if c.eta < max(min_samples, 1):
        return None
    xmin, ymin, xmax, ymax = c.bbox
    L = max(xmax - xmin, ymax - ymin)
    psi = math.atan((c.cx - geom.width / 2.0) / geom.lam)
    theta = math.atan((c.cy - geom.height / 2.0) / geom.lam)
    return ObjectEstimate(c.id, c.cx, c.cy, c.vx, c.vy, float(L), psi, theta, c.eta)


class ClusterSet:
    """Clusters keyed by id; assignment draws one seeded random member per cluster."""

    def __init__(self, config: ClusterConfig = ClusterConfig()):
        self.config = config
        self.rng = random.Random(config.seed)
        self.clusters: dict[int, FlowCluster] = {}
        self.next_id = 0

    def reset(self):
        self.rng = random.Random(self.config.seed)
        self.clusters.clear()
        self.next_id = 0

    def __len__(self):
        return len(self.clusters)

    def __iter__(self):
        return iter(self.clusters.values())

    def assign(self, f: FlowSample, tau_c: int) -> int:
        rho2 = self.config.rho ** 2
        best_id = -1
        best_d2 = math.inf
        for cid, c in self.clusters.items():  # insertion order == ascending id
            rep = c.phi[self.rng.randrange(len(c.phi))]
            if f.ts - rep.ts > tau_c:
                continue
            d2 = (f.x - rep.x) ** 2 + (f.y - rep.y) ** 2
            if d2 <= rho2 and d2 < best_d2:
                best_d2 = d2
                best_id = cid
        if best_id < 0:
            best_id = self.next_id
            self.next_id += 1
            self.clusters[best_id] = FlowCluster(best_id)
        add_flow(self.clusters[best_id], f)
        return best_id

    def expire(self, now: int, tau_c: int) -> None:
        dead = [cid for cid, c in self.clusters.items() if not expire(c, now, tau_c)]
        for cid in dead:
            del self.clusters[cid]

    def estimates(self, geom: SensorGeometry) -> list[ObjectEstimate]:
        out = []
        for c in self.clusters.values():
            est = object_estimate(c, geom, self.config.min_samples)
            if est is not None:
                out.append(est)
        return out
