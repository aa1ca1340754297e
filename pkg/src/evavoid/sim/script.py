"""Declarative scene description and its INI file form.

World frame: x right, y down (gravity +y), z forward along the nominal
flight direction; the camera starts at the origin looking along +z.
"""
from __future__ import annotations

import configparser
import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

from ..control import SafetyGeometry
from ..events import DAVIS346, SensorGeometry

GRAVITY = 9.81


@dataclass(frozen=True)
class ObstacleSpec:
    shape: str = "sphere"          # "sphere" (size = (R,)) or "box" (size = (w, h, d))
    size: tuple = (0.375,)
    launch_time: float = 0.0       # s; the obstacle rests at ``position`` before launch
    position: tuple = (0.0, 0.0, 10.0)
    velocity: tuple = (0.0, 0.0, -6.0)
    gravity: bool = True
    albedo: float = 0.25           # linear intensity; background texture has mean ~1
    texture: float = 0.6           # relative albedo of dark pattern cells / side faces; 0 = plain

    def __post_init__(self):
        if self.shape not in ("sphere", "box"):
            raise ValueError(f"obstacle shape must be sphere or box, got {self.shape!r}")
        if self.shape == "sphere" and len(self.size) != 1:
            raise ValueError("sphere size is (R,)")
        if self.shape == "box" and len(self.size) != 3:
            raise ValueError("box size is (w, h, d)")
        if min(self.size) <= 0:
            raise ValueError("obstacle size must be positive")
        if not self.albedo > 0:
            raise ValueError("albedo must be positive")
        if self.texture < 0:
            raise ValueError("texture must be >= 0")

    @property
    def radius(self) -> float:
        """Radius of the sphere enclosing the obstacle."""
        if self.shape == "sphere":
            return float(self.size[0])
        return 0.5 * math.sqrt(sum(s * s for s in self.size))

    def position_at(self, t: float) -> tuple[float, float, float]:
        if t <= self.launch_time:
            return tuple(float(v) for v in self.position)
        dt = t - self.launch_time
        x, y, z = self.position
        vx, vy, vz = self.velocity
        g = GRAVITY if self.gravity else 0.0
        return (x + vx * dt, y + vy * dt + 0.5 * g * dt * dt, z + vz * dt)


SMALL_BOX = ObstacleSpec(shape="box", size=(0.22, 0.20, 0.15), albedo=0.35)
FITBALL = ObstacleSpec(shape="sphere", size=(0.375,), albedo=0.35)
PRESETS = {"small_box": SMALL_BOX, "fitball": FITBALL}


@dataclass(frozen=True)
class CameraSpec:
    v_z: float = 4.5               # m/s forward
    pitch_amp_deg: float = 0.5     # flapping-induced pitch oscillation
    pitch_freq: float = 5.0        # Hz
    pitch_rate: float = 0.0        # constant pitch rate, rad/s
    position: tuple = (0.0, 0.0, 0.0)

    def pitch(self, t: float) -> float:
        return (math.radians(self.pitch_amp_deg) * math.sin(2 * math.pi * self.pitch_freq * t)
                + self.pitch_rate * t)

    def pitch_rate_at(self, t: float) -> float:
        w = 2 * math.pi * self.pitch_freq
        return math.radians(self.pitch_amp_deg) * w * math.cos(w * t) + self.pitch_rate

    def position_at(self, t: float) -> tuple[float, float, float]:
        x, y, z = self.position
        return (x, y, z + self.v_z * t)


@dataclass(frozen=True)
class BackgroundSpec:
    depth: float = 8.0             # wall distance from the start position, m
    feature_size: float = 0.4      # gaussian correlation length of the texture, m
    contrast: float = 0.2          # std of log intensity
    extent: float = 30.0           # texture side length, m
    texel: float = 0.04            # m


@dataclass(frozen=True)
class SceneScript:
    geometry: SensorGeometry = DAVIS346
    duration: float = 1.0
    camera: CameraSpec = CameraSpec()
    background: BackgroundSpec = BackgroundSpec()
    obstacles: tuple = ()
    contrast_threshold: float = 0.2
    noise_rate: float = 0.1        # background-activity events per pixel per second
    micro_step: int = 500          # us
    seed: int = 0
    safety: SafetyGeometry = SafetyGeometry()

    def __post_init__(self):
        errors = []
        if not self.duration > 0:
            errors.append("duration: must be > 0")
        if not 0 < self.micro_step <= 1000:
            errors.append("micro_step: must be in (0, 1000] us")
        if not self.contrast_threshold > 0:
            errors.append("contrast_threshold: must be > 0")
        if self.noise_rate < 0:
            errors.append("noise_rate: must be >= 0")
        if not self.background.depth > 0:
            errors.append("background.depth: must be > 0")
        if errors:
            raise ValueError("invalid scene script: " + "; ".join(errors))
        object.__setattr__(self, "obstacles", tuple(self.obstacles))

    @property
    def n_frames(self) -> int:
        return int(round(self.duration * 1e6 / self.micro_step))


def _fmt(v) -> str:
    if isinstance(v, tuple):
        return " ".join(repr(float(x)) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse(text: str, like):
    if isinstance(like, bool):
        return text.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(like, int):
        return int(text)
    if isinstance(like, float):
        return float(text)
    if isinstance(like, tuple):
        return tuple(float(v) for v in text.replace(",", " ").split())
    return text.strip()


def _section(parser, name, obj):
    parser[name] = {f.name: _fmt(getattr(obj, f.name)) for f in dataclasses.fields(obj)}


def _read_section(parser, name, default):
    if not parser.has_section(name):
        return default
    names = {f.name for f in dataclasses.fields(default)}
    vals = {}
    for key, text in parser[name].items():
        if key not in names:
            raise ValueError(f"[{name}] unknown key {key!r}")
        vals[key] = _parse(text, getattr(default, key))
    return dataclasses.replace(default, **vals)


def dump_script(script: SceneScript, path: str | Path) -> None:
    parser = configparser.ConfigParser()
    parser.optionxform = str
    g = script.geometry
    parser["scene"] = {"duration": _fmt(script.duration),
                       "contrast_threshold": _fmt(script.contrast_threshold),
                       "noise_rate": _fmt(script.noise_rate),
                       "micro_step": str(script.micro_step), "seed": str(script.seed)}
    parser["sensor"] = {"width": str(g.width), "height": str(g.height), "lambda": repr(g.lam)}
    if g.fov_h is not None and g.fov_v is not None:
        parser["sensor"].update(fov_h=repr(g.fov_h), fov_v=repr(g.fov_v))
    _section(parser, "camera", script.camera)
    _section(parser, "background", script.background)
    _section(parser, "safety", script.safety)
    for i, ob in enumerate(script.obstacles):
        _section(parser, f"obstacle.{i}", ob)
    with open(path, "w") as fh:
        parser.write(fh)


def load_script(path: str | Path) -> SceneScript:
    parser = configparser.ConfigParser()
    parser.optionxform = str
    if not parser.read(path):
        raise FileNotFoundError(path)
    base = SceneScript()
    kw = {}
    if parser.has_section("scene"):
        sc = parser["scene"]
        for key in sc:
            if key not in ("duration", "contrast_threshold", "noise_rate", "micro_step", "seed"):
                raise ValueError(f"[scene] unknown key {key!r}")
            kw[key] = _parse(sc[key], getattr(base, key))
    if parser.has_section("sensor"):
        s = parser["sensor"]
        fov = [float(s[k]) if k in s else None for k in ("fov_h", "fov_v")]
        kw["geometry"] = SensorGeometry(int(s["width"]), int(s["height"]), float(s["lambda"]), *fov)
    kw["camera"] = _read_section(parser, "camera", base.camera)
    kw["background"] = _read_section(parser, "background", base.background)
    kw["safety"] = _read_section(parser, "safety", base.safety)
    obstacles = []
    names = sorted((s for s in parser.sections() if s.startswith("obstacle.")),
                   key=lambda s: int(s.split(".", 1)[1]))
    for name in names:
        default = ObstacleSpec()
        if parser.has_option(name, "shape") and parser[name]["shape"].strip() == "box":
            default = SMALL_BOX
        obstacles.append(_read_section(parser, name, default))
    kw["obstacles"] = tuple(obstacles)
    return SceneScript(**kw)
