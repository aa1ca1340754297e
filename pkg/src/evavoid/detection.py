"""Dynamic-event time filter and event corner detector.

The time filter keeps a surface of active events (last timestamp per pixel)
and marks an event dynamic when its pixel fired less than ``tau`` earlier.
``tau`` follows the robot's forward and pitch velocities. Dynamic events are
then gated through an eFAST-style corner test on per-polarity surfaces fed
only by dynamic events.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numba as nb
import numpy as np

NEVER = -1  # sentinel timestamp for pixels that have not fired

# radius-3 (16 px) and radius-4 (20 px) Bresenham circles, clockwise from top
CIRCLE3 = np.array([
    (0, 3), (1, 3), (2, 2), (3, 1), (3, 0), (3, -1), (2, -2), (1, -3),
    (0, -3), (-1, -3), (-2, -2), (-3, -1), (-3, 0), (-3, 1), (-2, 2), (-1, 3),
], dtype=np.int64)
CIRCLE4 = np.array([
    (0, 4), (1, 4), (2, 3), (3, 2), (4, 1), (4, 0), (4, -1), (3, -2), (2, -3), (1, -4),
    (0, -4), (-1, -4), (-2, -3), (-3, -2), (-4, -1), (-4, 0), (-4, 1), (-3, 2), (-2, 3), (-1, 4),
], dtype=np.int64)
CORNER_BORDER = 4
ARC3 = (3, 6)
ARC4 = (4, 8)


@dataclass(frozen=True)
class TauSchedule:
    """Velocity-adaptive time-filter threshold. Times in us, velocities in m/s and rad/s."""
    tau_L: float = 15_000.0
    tau_H: float = 25_000.0
    v_L: float = 3.0
    v_H: float = 6.0
    omega_L: float = 1.3
    omega_H: float = 3.0
    alpha: float = 0.8

    def __post_init__(self):
        if not (self.tau_L < self.tau_H and self.v_L < self.v_H and self.omega_L < self.omega_H):
            raise ValueError(f"schedule ranges must be increasing: {self}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")


@dataclass
class RobotKinematicState:
    v_z: float = 0.0
    omega_x: float = 0.0
    attitude: tuple = (0.0, 0.0, 0.0)
    v_body: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        vals = [self.v_z, self.omega_x, *self.attitude, *self.v_body]
        if not np.all(np.isfinite(vals)):
            raise ValueError("kinematic state must be finite")


def compute_tau(state: RobotKinematicState, sched: TauSchedule) -> float:
    """Blend of the forward- and pitch-velocity thresholds, in microseconds."""
    v = min(max(state.v_z, sched.v_L), sched.v_H)
    w = min(max(state.omega_x, sched.omega_L), sched.omega_H)
    span = sched.tau_H - sched.tau_L
    tau_v = sched.tau_H - span * (v - sched.v_L) / (sched.v_H - sched.v_L)
    tau_w = sched.tau_H - span * (w - sched.omega_L) / (sched.omega_H - sched.omega_L)
    tau = sched.alpha * tau_v + (1.0 - sched.alpha) * tau_w
    return min(max(tau, sched.tau_L), sched.tau_H)


@nb.njit(cache=True)
def classify_kernel(grid, x, y, ts, tau):
    prev = grid[y, x]
    grid[y, x] = ts
    return prev != NEVER and ts - prev < tau


@nb.njit(cache=True)
def _has_streak(surf, x, y, circle, lo, hi):
    n = circle.shape[0]
    for i in range(n):
        for size in range(lo, hi + 1):
            first = surf[y + circle[i, 1], x + circle[i, 0]]
            before = surf[y + circle[(i - 1 + n) % n, 1], x + circle[(i - 1 + n) % n, 0]]
            if first < before:
                continue
            last = surf[y + circle[(i + size - 1) % n, 1], x + circle[(i + size - 1) % n, 0]]
            after = surf[y + circle[(i + size) % n, 1], x + circle[(i + size) % n, 0]]
            if last < after:
                continue
            min_t = first
            for j in range(1, size):
                k = (i + j) % n
                t = surf[y + circle[k, 1], x + circle[k, 0]]
                if t < min_t:
                    min_t = t
            ok = True
            for j in range(size, n):
                k = (i + j) % n
                if surf[y + circle[k, 1], x + circle[k, 0]] >= min_t:
                    ok = False
                    break
            if ok:
                return True
    return False


@nb.njit(cache=True)
def corner_kernel(pol_surfaces, x, y, ts, p, circle3, circle4):
    """Write the event into its polarity surface, then run the two-circle arc test."""
    surf = pol_surfaces[0 if p > 0 else 1]
    surf[y, x] = ts
    h, w = surf.shape
    if x < CORNER_BORDER or x >= w - CORNER_BORDER or y < CORNER_BORDER or y >= h - CORNER_BORDER:
        return False
    if not _has_streak(surf, x, y, circle3, 3, 6):
        return False
    return _has_streak(surf, x, y, circle4, 4, 8)


@dataclass
class SurfaceOfActiveEvents:
    width: int
    height: int
    grid: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.grid = np.full((self.height, self.width), NEVER, dtype=np.int64)

    def reset(self):
        self.grid.fill(NEVER)

    def __getitem__(self, xy):
        x, y = xy
        return int(self.grid[y, x])


@dataclass
class PolaritySurfaces:
    """Per-polarity timestamp surfaces written only by dynamic events (index 0: +1, 1: -1)."""
    width: int
    height: int
    grid: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.grid = np.full((2, self.height, self.width), NEVER, dtype=np.int64)

    def reset(self):
        self.grid.fill(NEVER)


def classify_event(e, sae: SurfaceOfActiveEvents, tau: float) -> bool:
    """True (dynamic) iff the pixel fired before and less than ``tau`` us ago.

    The surface is updated with ``e.ts`` in every case.
    """
    return bool(classify_kernel(sae.grid, int(e.x), int(e.y), int(e.ts), float(tau)))


def detect_corner(e, surfaces: PolaritySurfaces) -> bool:
    """Record a dynamic event on its polarity surface and test it for a corner."""
    return bool(corner_kernel(surfaces.grid, int(e.x), int(e.y), int(e.ts), int(e.p),
                              CIRCLE3, CIRCLE4))
