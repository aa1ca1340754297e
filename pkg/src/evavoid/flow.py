"""Block-matching optical flow between rotating event slices.

Dynamic events are accumulated into the current slice (a 2D count
histogram). When stream time passes the end of the current slice the ring
rotates (current -> past -> past2) and the slice duration ``d`` adapts to the
peak number of events the finished window collected in one block-sized
area. Flow for a corner event is
the displacement that best maps the block around it in ``past`` onto
``past2``, negated and divided by the time between the two slice centres.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numba as nb
import numpy as np

# layout of the int64 ring-state vector shared with the kernels
I_CUR, I_PAST, I_PAST2 = 0, 1, 2
CUR_T0, CUR_T1, PAST_T0, PAST_T1, PAST2_T0, PAST2_T1 = 3, 4, 5, 6, 7, 8
CUR_N, PAST_N, PAST2_N = 9, 10, 11
D, TAU_C, N_ROT, STARTED = 12, 13, 14, 15
TILE = 16   # side of the areas whose peak count drives the adaptation of d
META_LEN = 17


@dataclass(frozen=True)
class FlowConfig:
    search_radius: int = 12
    block_radius: int = 6
    d_init: int = 10_000
    d_min: int = 5_000
    d_max: int = 40_000
    k_ref: float = 2.0
    lo_frac: float = 0.1
    hi_frac: float = 0.9
    ambiguity_ratio: float = 0.9

    @property
    def area_ref(self) -> float:
        return (2 * self.block_radius + 1) ** 2 * self.k_ref

    @property
    def lo_watermark(self) -> float:
        return self.lo_frac * self.area_ref

    @property
    def hi_watermark(self) -> float:
        return self.hi_frac * self.area_ref

    def __post_init__(self):
        if not 0 < self.d_min <= self.d_init <= self.d_max:
            raise ValueError("need 0 < d_min <= d_init <= d_max")
        if self.block_radius < 0 or self.search_radius < 0:
            raise ValueError("radii must be non-negative")


class FlowSample(NamedTuple):
    x: float
    y: float
    ts: int
    vx: float
    vy: float


@nb.njit(cache=True)
def start_kernel(meta, t0, d):
    meta[CUR_T0] = t0
    meta[CUR_T1] = t0 + d
    meta[PAST_T0] = t0 - d
    meta[PAST_T1] = t0
    meta[PAST2_T0] = t0 - 2 * d
    meta[PAST2_T1] = t0 - d
    meta[D] = d
    meta[TAU_C] = 2 * d
    meta[STARTED] = 1


@nb.njit(cache=True)
def rotate_kernel(slices, meta, count, d_min, d_max, lo, hi):
    d = meta[D]
    if count > hi:
        d = max(d // 2, d_min)
    elif count < lo:
        d = min(d * 2, d_max)
    retired = meta[I_PAST2]
    slices[retired, :, :] = 0
    meta[I_PAST2] = meta[I_PAST]
    meta[I_PAST] = meta[I_CUR]
    meta[I_CUR] = retired
    meta[PAST2_T0] = meta[PAST_T0]
    meta[PAST2_T1] = meta[PAST_T1]
    meta[PAST_T0] = meta[CUR_T0]
    meta[PAST_T1] = meta[CUR_T1]
    meta[PAST2_N] = meta[PAST_N]
    meta[PAST_N] = meta[CUR_N]
    meta[CUR_N] = 0
    meta[CUR_T0] = meta[PAST_T1]
    meta[CUR_T1] = meta[CUR_T0] + d
    meta[D] = d
    meta[TAU_C] = 2 * d
    meta[N_ROT] += 1


@nb.njit(cache=True)
def peak_area_count(hist, tile):
    """Largest event count over non-overlapping ``tile`` x ``tile`` areas."""
    h, w = hist.shape
    peak = 0
    for y0 in range(0, h, tile):
        for x0 in range(0, w, tile):
            n = 0
            for y in range(y0, min(y0 + tile, h)):
                for x in range(x0, min(x0 + tile, w)):
                    n += hist[y, x]
            if n > peak:
                peak = n
    return peak


@nb.njit(cache=True)
def advance_kernel(slices, meta, now, d_min, d_max, lo, hi):
    while now >= meta[CUR_T1]:
        count = meta[CUR_N]
        if count > 0 and meta[TILE] > 0:
            count = peak_area_count(slices[meta[I_CUR]], meta[TILE])
        rotate_kernel(slices, meta, count, d_min, d_max, lo, hi)


@nb.njit(cache=True)
def block_match(past, past2, x, y, rb, rs, ratio):
    """Return (ok, dx, dy) of the past2 block best matching the past block at (x, y)."""
    h, w = past.shape
    if x - rb < 0 or x + rb >= w or y - rb < 0 or y + rb >= h:
        return False, 0, 0
    mass = 0
    for j in range(-rb, rb + 1):
        for i in range(-rb, rb + 1):
            mass += past[y + j, x + i]
    if mass == 0:
        return False, 0, 0
    y0 = max(y - rb - rs, 0)
    y1 = min(y + rb + rs, h - 1)
    x0 = max(x - rb - rs, 0)
    x1 = min(x + rb + rs, w - 1)
    mass2 = 0
    for yy in range(y0, y1 + 1):
        for xx in range(x0, x1 + 1):
            mass2 += past2[yy, xx]
    if mass2 == 0:
        return False, 0, 0
    inf = np.iinfo(np.int64).max
    best = inf
    second = inf
    bdx = 0
    bdy = 0
    for dy in range(-rs, rs + 1):
        cy = y + dy
        if cy - rb < 0 or cy + rb >= h:
            continue
        for dx in range(-rs, rs + 1):
            cx = x + dx
            if cx - rb < 0 or cx + rb >= w:
                continue
            sad = 0
            for j in range(-rb, rb + 1):
                for i in range(-rb, rb + 1):
                    diff = past[y + j, x + i] - past2[cy + j, cx + i]
                    sad += diff if diff >= 0 else -diff
                if sad >= second:
                    break
            if sad < best:
                second = best
                best = sad
                bdx = dx
                bdy = dy
            elif sad < second:
                second = sad
    if best == inf:
        return False, 0, 0
    if second != inf and not (best < second and best <= ratio * second):
        return False, 0, 0
    return True, bdx, bdy


@nb.njit(cache=True)
def flow_kernel(slices, meta, x, y, rb, rs, ratio):
    """Flow in px/s at (x, y) from the two completed slices; ok=False if rejected."""
    if meta[N_ROT] < 2:
        return False, 0.0, 0.0
    ok, dx, dy = block_match(slices[meta[I_PAST]], slices[meta[I_PAST2]], x, y, rb, rs, ratio)
    if not ok:
        return False, 0.0, 0.0
    dt_us = 0.5 * ((meta[PAST_T0] + meta[PAST_T1]) - (meta[PAST2_T0] + meta[PAST2_T1]))
    scale = 1e6 / dt_us
    return True, -dx * scale, -dy * scale


class SliceRing:
    """Three-slice rotation (current, past, past2) with adaptive duration ``d`` (us)."""

    def __init__(self, width: int, height: int, config: FlowConfig = FlowConfig()):
        self.width = width
        self.height = height
        self.config = config
        self.slices = np.zeros((3, height, width), dtype=np.int32)
        self.meta = np.zeros(META_LEN, dtype=np.int64)
        self.meta[I_CUR], self.meta[I_PAST], self.meta[I_PAST2] = 0, 1, 2
        self.reset()

    def reset(self):
        self.slices.fill(0)
        self.meta[:] = 0
        self.meta[I_CUR], self.meta[I_PAST], self.meta[I_PAST2] = 0, 1, 2
        self.meta[D] = self.config.d_init
        self.meta[TAU_C] = 2 * self.config.d_init
        self.meta[TILE] = 2 * self.config.block_radius + 1

    @property
    def current(self) -> np.ndarray:
        return self.slices[self.meta[I_CUR]]

    @property
    def past(self) -> np.ndarray:
        return self.slices[self.meta[I_PAST]]

    @property
    def past2(self) -> np.ndarray:
        return self.slices[self.meta[I_PAST2]]

    @property
    def d(self) -> int:
        return int(self.meta[D])

    @property
    def tau_c(self) -> int:
        return int(self.meta[TAU_C])

    @property
    def started(self) -> bool:
        return bool(self.meta[STARTED])

    @property
    def current_count(self) -> int:
        return int(self.meta[CUR_N])

    def peak_count(self) -> int:
        """Peak event count of the current slice over block-sized areas."""
        return int(peak_area_count(self.current, int(self.meta[TILE])))

    def time_ranges(self) -> dict[str, tuple[int, int]]:
        m = self.meta
        return {"current": (int(m[CUR_T0]), int(m[CUR_T1])),
                "past": (int(m[PAST_T0]), int(m[PAST_T1])),
                "past2": (int(m[PAST2_T0]), int(m[PAST2_T1]))}

    def start(self, t0: int):
        start_kernel(self.meta, int(t0), int(self.meta[D]))

    def _watermarks(self):
        c = self.config
        return c.d_min, c.d_max, c.lo_watermark, c.hi_watermark

    def rotate(self, now: int | None = None, event_rate_feedback: int | None = None) -> tuple[int, int]:
        """Rotate once.

        ``event_rate_feedback`` defaults to the finished window's peak count
        over block-sized areas, the quantity the watermarks are scaled to.
        """
        if not self.started:
            self.start(now if now is not None else 0)
        if now is not None and now < self.meta[CUR_T1]:
            raise ValueError("rotation before the current slice has ended")
        count = self.peak_count() if event_rate_feedback is None else int(event_rate_feedback)
        rotate_kernel(self.slices, self.meta, count, *self._watermarks())
        return self.d, self.tau_c

    def advance(self, now: int) -> tuple[int, int]:
        """Rotate as many times as needed for ``now`` to fall inside the current slice."""
        if not self.started:
            self.start(now)
        advance_kernel(self.slices, self.meta, int(now), *self._watermarks())
        return self.d, self.tau_c

    def accumulate(self, e) -> None:
        self.advance(int(e.ts))
        self.slices[self.meta[I_CUR], int(e.y), int(e.x)] += 1
        self.meta[CUR_N] += 1

    def compute_flow(self, e, search_radius: int | None = None,
                     block_radius: int | None = None) -> FlowSample | None:
        c = self.config
        rs = c.search_radius if search_radius is None else search_radius
        rb = c.block_radius if block_radius is None else block_radius
        ok, vx, vy = flow_kernel(self.slices, self.meta, int(e.x), int(e.y), rb, rs,
                                 c.ambiguity_ratio)
        if not ok:
            return None
        return FlowSample(float(e.x), float(e.y), int(e.ts), vx, vy)
