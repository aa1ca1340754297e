"""Collision-risk geometry and reactive tail-deflection commands."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .clustering import ObjectEstimate


@dataclass(frozen=True)
class SafetyGeometry:
    W: float = 0.75   # half of the 1.5 m wingspan
    H: float = 0.25
    R: float = 0.375
    b: float = 0.2
    length: float = 0.95

    def __post_init__(self):
        if min(self.W, self.H, self.R, self.b, self.length) <= 0:
            raise ValueError(f"safety geometry must be positive: {self}")

    @property
    def R_prime(self) -> float:
        return self.R + self.b


class RiskMode(str, enum.Enum):
    DEPTH_AND_RADIUS_KNOWN = "depth_and_radius_known"
    RADIUS_KNOWN = "radius_known"
    UNKNOWN = "unknown"


class ControlCommand(NamedTuple):
    delta_e: float
    delta_r: float


@dataclass(frozen=True)
class ControllerGains:
    # saturate the 30 deg limit at 500 px/s, half from each term
    kappa0: tuple = (math.radians(30) / 1000.0, math.radians(30) / 1000.0)
    kappa1: tuple = (math.radians(30) / 500_000.0, math.radians(30) / 500_000.0)

    def __post_init__(self):
        if min(*self.kappa0, *self.kappa1) < 0:
            raise ValueError("controller gains must be non-negative")


DEFAULT_LIMITS = ((-math.radians(30), math.radians(30)), (-math.radians(30), math.radians(30)))


def estimate_depth(L: float, R: float, lam: float) -> float | None:
    """Depth from apparent size; None for a degenerate (zero-extent) object."""
    if not L > 0:
        return None
    return lam * R / L


def collision_limits(z: float, geom: SafetyGeometry) -> tuple[float, float] | None:
    """Angular half-widths (psi*, theta*) of the collision cone at depth ``z``.

    Returns None when ``z <= 2 R'``: the obstacle is already inside the
    region where the cone is undefined and risk is immediate.
    """
    rp2 = 2.0 * geom.R_prime
    if z <= rp2:
        return None
    den = z - rp2
    return math.atan((geom.W + rp2) / den), math.atan((geom.H + rp2) / den)


class RiskAssessment(NamedTuple):
    risk: bool
    psi: float
    theta: float
    psi_star: float
    theta_star: float
    z: float


def evaluate_risk(obs: ObjectEstimate, mode: RiskMode, geom: SafetyGeometry, lam: float,
                  z_measured: float | None = None) -> RiskAssessment:
    mode = RiskMode(mode)
    nan = float("nan")
    if mode is RiskMode.UNKNOWN:
        return RiskAssessment(True, obs.psi, obs.theta, nan, nan, nan)
    if mode is RiskMode.DEPTH_AND_RADIUS_KNOWN:
        if z_measured is None:
            raise ValueError("depth_and_radius_known mode needs a measured depth")
        z = float(z_measured)
    else:
        z = estimate_depth(obs.L, geom.R, lam)
        if z is None:
            return RiskAssessment(False, obs.psi, obs.theta, nan, nan, math.inf)
    limits = collision_limits(z, geom)
    if limits is None:
        return RiskAssessment(True, obs.psi, obs.theta, math.pi / 2, math.pi / 2, z)
    psi_s, theta_s = limits
    risk = abs(obs.psi) <= psi_s and abs(obs.theta) <= theta_s
    return RiskAssessment(risk, obs.psi, obs.theta, psi_s, theta_s, z)


def reactive_command(v_mean, gains: ControllerGains = ControllerGains()) -> ControlCommand:
    v = np.asarray(v_mean, dtype=float)
    k = np.asarray(gains.kappa0) + np.asarray(gains.kappa1) * math.hypot(v[0], v[1])
    u = -k * v
    return ControlCommand(float(u[0]), float(u[1]))


class SurrogateDynamics:
    """Linear map to camera-frame body acceleration (x right, y down, z forward).

    ``accel = A @ [v_x, v_y, v_z, roll, pitch, yaw] + B @ [delta_e, delta_r] + c``.
    The parameter file is a 3x9 whitespace table ``[A | B | c]``.
    """

    def __init__(self, A, B, c=(0.0, 0.0, 0.0)):
        self.A = np.asarray(A, dtype=float).reshape(3, 6)
        self.B = np.asarray(B, dtype=float).reshape(3, 2)
        self.c = np.asarray(c, dtype=float).reshape(3)

    @classmethod
    def from_file(cls, path) -> "SurrogateDynamics":
        m = np.loadtxt(path, ndmin=2)
        if m.shape != (3, 9):
            raise ValueError(f"{path}: expected a 3x9 parameter table, got {m.shape}")
        return cls(m[:, :6], m[:, 6:8], m[:, 8])

    @classmethod
    def default(cls) -> "SurrogateDynamics":
        with resources.as_file(resources.files("evavoid") / "data" / "surrogate_dynamics.txt") as p:
            return cls.from_file(p)

    def to_file(self, path) -> None:
        np.savetxt(Path(path), np.hstack([self.A, self.B, self.c[:, None]]), fmt="%.9g",
                   header="A (3x6) | B (3x2) | c (3x1); rows are camera-frame x, y, z accelerations")

    def state_vector(self, state) -> np.ndarray:
        return np.array([*state.v_body, *state.attitude], dtype=float)

    def acceleration(self, state, u) -> np.ndarray:
        """Acceleration for one command (shape (2,)) or a batch (shape (N, 2))."""
        u = np.asarray(u, dtype=float)
        drift = self.A @ self.state_vector(state) + self.c
        return u @ self.B.T + drift


def _grid_offsets(grid_step: float, half_span: float) -> np.ndarray:
    n = (2.0 * half_span) / grid_step
    if abs(n - round(n)) > 1e-9 or round(n) < 1:
        raise ValueError(f"grid step {grid_step} does not divide the {2 * half_span} span")
    n = int(round(n))
    return -half_span + grid_step * np.arange(n + 1)


def refine_with_model(u_react: ControlCommand, state, dyn, grid_step: float = math.radians(2),
                      direction=None, half_span: float = math.radians(10)) -> ControlCommand:
    """Add the tail increment within +-10 deg that maximises evasive acceleration.

    The objective is the acceleration component along ``direction`` (an image
    plane x/y unit vector). By default the direction is the one the reactive
    command already pushes towards; with a zero reactive command the lateral
    acceleration magnitude is maximised instead. Ties go to the smallest
    offset.
    """
    off = _grid_offsets(grid_step, half_span)
    de, dr = np.meshgrid(off, off, indexing="ij")
    offsets = np.column_stack([de.ravel(), dr.ravel()])
    base = np.asarray(u_react, dtype=float)
    acc = np.asarray(dyn.acceleration(state, base + offsets), dtype=float)[:, :2]
    if direction is None:
        push = np.asarray(dyn.acceleration(state, base), dtype=float)[:2] - \
            np.asarray(dyn.acceleration(state, np.zeros(2)), dtype=float)[:2]
        norm = math.hypot(*push)
        direction = push / norm if norm > 0 else None
    if direction is None:
        score = np.hypot(acc[:, 0], acc[:, 1])
    else:
        score = acc @ np.asarray(direction, dtype=float)
    top = score.max()
    tol = 1e-12 * max(1.0, abs(top))
    cand = np.flatnonzero(score >= top - tol)
    size = np.abs(offsets[cand]).sum(axis=1)
    pick = cand[np.lexsort((offsets[cand, 1], offsets[cand, 0], size))[0]]
    d = offsets[pick]
    return ControlCommand(float(base[0] + d[0]), float(base[1] + d[1]))


def clamp_deflections(u: ControlCommand, limits=DEFAULT_LIMITS) -> ControlCommand:
    (e_lo, e_hi), (r_lo, r_hi) = limits
    if e_lo > e_hi or r_lo > r_hi:
        raise ValueError("empty deflection interval")
    return ControlCommand(min(max(u[0], e_lo), e_hi), min(max(u[1], r_lo), r_hi))
