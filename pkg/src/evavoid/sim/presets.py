"""Seeded scene families used by the experiments and the acceptance suite."""
from __future__ import annotations

import dataclasses
import math

import numpy as np

from ..events import EVENT_DTYPE
from .script import FITBALL, GRAVITY, PRESETS, SMALL_BOX, CameraSpec, ObstacleSpec, SceneScript

TAN_HALF_FOV_H = math.tan(math.radians(34))   # DAVIS346 horizontal half field of view


def _rng(kind: str, preset: str, seed: int) -> np.random.Generator:
    key = [ord(c) for c in f"{kind}:{preset}"]
    return np.random.default_rng([seed, *key])


def _obstacle(preset: str, **kw) -> ObstacleSpec:
    return dataclasses.replace(PRESETS[preset], **kw)


def canonical_scene(seed: int = 0) -> SceneScript:
    """Forward flight at 4.5 m/s; a Fitball thrown across the view from about 7 m."""
    ob = dataclasses.replace(FITBALL, launch_time=0.1, position=(-3.5, -0.5, 7.0),
                             velocity=(6.5, -2.5, -1.0))
    return SceneScript(duration=1.0, obstacles=(ob,), seed=seed)


def detection_scene(preset: str, seed: int) -> SceneScript:
    """Obstacle thrown laterally across the view, passing through the 2-4 m band."""
    r = _rng("detect", preset, seed)
    cam = CameraSpec()
    t_launch = 0.1
    speed = r.uniform(5.0, 8.0)
    side = -1.0 if r.random() < 0.5 else 1.0
    z_rel = r.uniform(4.8, 5.6)
    x0 = side * (TAN_HALF_FOV_H * z_rel * 0.7)
    flight = 2 * abs(x0) / speed
    vy = -0.5 * GRAVITY * flight + r.uniform(-0.3, 0.3)
    y0 = r.uniform(-0.1, 0.3)
    z0 = cam.v_z * t_launch + z_rel
    vz = r.uniform(-0.5, 0.5)
    ob = _obstacle(preset, launch_time=t_launch, position=(x0, y0, z0),
                   velocity=(-side * speed, vy, vz))
    return SceneScript(duration=t_launch + min(flight, 0.75), camera=cam, obstacles=(ob,), seed=seed)


def direction_scene(seed: int, preset: str = "fitball") -> SceneScript:
    """Obstacle launched from about 8 m ahead on a crossing, approaching path."""
    r = _rng("direction", preset, seed)
    cam = CameraSpec()
    t_launch = 0.1
    speed = r.uniform(5.0, 8.0)
    heading = r.uniform(0, 2 * math.pi)
    z0 = cam.v_z * t_launch + 8.0
    lateral = 0.6 * speed
    vx = lateral * math.cos(heading)
    vy = lateral * math.sin(heading)
    vz = -math.sqrt(max(speed ** 2 - lateral ** 2, 0.0))
    duration = 0.7
    x0 = -vx * 0.3
    y0 = -vy * 0.3 - 0.5 * GRAVITY * 0.3 ** 2
    ob = _obstacle(preset, launch_time=t_launch, position=(x0, y0, z0), velocity=(vx, vy, vz))
    return SceneScript(duration=duration, camera=cam, obstacles=(ob,), seed=seed)


def _ballistic_velocity(start, target, t_flight, gravity=True):
    g = GRAVITY if gravity else 0.0
    d = np.asarray(target, float) - np.asarray(start, float)
    v = d / t_flight
    v[1] -= 0.5 * g * t_flight
    return tuple(float(a) for a in v)


def head_on_scene(preset: str, seed: int) -> SceneScript:
    """Obstacle launched from 10 m straight at the robot's future position (5-8 m/s)."""
    r = _rng("headon", preset, seed)
    cam = CameraSpec()
    t_launch = 0.1
    speed = r.uniform(5.0, 8.0)
    z0 = cam.v_z * t_launch + 10.0
    t_hit = 10.0 / (speed + cam.v_z)
    aim = (r.uniform(-0.2, 0.2), r.uniform(-0.1, 0.1), cam.v_z * (t_launch + t_hit))
    start = (r.uniform(-0.5, 0.5), r.uniform(-0.3, 0.1), z0)
    vel = _ballistic_velocity(start, aim, t_hit)
    ob = _obstacle(preset, launch_time=t_launch, position=start, velocity=vel)
    return SceneScript(duration=t_launch + t_hit + 0.15, camera=cam, obstacles=(ob,), seed=seed)


def far_offset_scene(seed: int, preset: str = "small_box") -> SceneScript:
    """Obstacle passing well clear of the safety volume (no ISV)."""
    r = _rng("faroffset", preset, seed)
    cam = CameraSpec()
    t_launch = 0.1
    speed = r.uniform(5.0, 8.0)
    z0 = cam.v_z * t_launch + 10.0
    t_pass = 10.0 / (speed + cam.v_z)
    side = -1.0 if r.random() < 0.5 else 1.0
    offset = side * r.uniform(2.5, 4.0)
    aim = (offset, r.uniform(-0.3, 0.1), cam.v_z * (t_launch + t_pass))
    start = (offset + r.uniform(-0.5, 0.5), r.uniform(-0.3, 0.1), z0)
    vel = _ballistic_velocity(start, aim, t_pass)
    ob = _obstacle(preset, launch_time=t_launch, position=start, velocity=vel)
    return SceneScript(duration=t_launch + t_pass + 0.15, camera=cam, obstacles=(ob,), seed=seed)


def thin_to_rate(events: np.ndarray, rate_hz: float, seed: int = 0) -> np.ndarray:
    """Seeded uniform thinning of a stream to an average event rate."""
    if len(events) < 2:
        return events
    span = (int(events["ts"][-1]) - int(events["ts"][0])) * 1e-6
    keep = min(1.0, rate_hz * span / len(events)) if span > 0 else 1.0
    mask = np.random.default_rng(seed).random(len(events)) < keep
    return np.ascontiguousarray(events[mask]).astype(EVENT_DTYPE)


__all__ = ["canonical_scene", "detection_scene", "direction_scene", "head_on_scene",
           "far_offset_scene", "thin_to_rate", "SMALL_BOX", "FITBALL"]
