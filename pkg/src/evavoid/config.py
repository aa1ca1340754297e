"""Pipeline configuration and its plain-text (INI) form."""
from __future__ import annotations

import configparser
import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path

from .clustering import ClusterConfig
from .control import ControllerGains, RiskMode, SafetyGeometry
from .detection import TauSchedule
from .flow import FlowConfig


@dataclass(frozen=True)
class ControlConfig:
    risk_mode: RiskMode = RiskMode.RADIUS_KNOWN
    gains: ControllerGains = ControllerGains()
    grid_step_deg: float = 2.0
    refine_span_deg: float = 10.0
    limit_e_deg: tuple = (-30.0, 30.0)
    limit_r_deg: tuple = (-30.0, 30.0)
    dynamics_file: str = ""

    @property
    def limits(self):
        return (tuple(math.radians(v) for v in self.limit_e_deg),
                tuple(math.radians(v) for v in self.limit_r_deg))


@dataclass(frozen=True)
class PipelineConfig:
    schedule: TauSchedule = TauSchedule()
    flow: FlowConfig = FlowConfig()
    cluster: ClusterConfig = ClusterConfig()
    safety: SafetyGeometry = SafetyGeometry()
    control: ControlConfig = ControlConfig()
    package_rate: float = 250.0

    def replace(self, **sections) -> "PipelineConfig":
        """``cfg.replace(flow={"d_min": 2000}, package_rate=500)``."""
        kwargs = {}
        for name, value in sections.items():
            if isinstance(value, dict):
                kwargs[name] = dataclasses.replace(getattr(self, name), **value)
            else:
                kwargs[name] = value
        return dataclasses.replace(self, **kwargs)


_SECTIONS = ("schedule", "flow", "cluster", "safety", "control")


def _parse(text: str, like):
    if isinstance(like, bool):
        return text.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(like, RiskMode):
        return RiskMode(text.strip())
    if isinstance(like, int):
        return int(text)
    if isinstance(like, float):
        return float(text)
    if isinstance(like, tuple):
        return tuple(float(v) for v in text.replace(",", " ").split())
    return text.strip()


def _format(value) -> str:
    if isinstance(value, RiskMode):
        return value.value
    if isinstance(value, tuple):
        return " ".join(repr(float(v)) for v in value)
    return str(value)


def load_config(path: str | Path | None) -> PipelineConfig:
    cfg = PipelineConfig()
    if path is None:
        return cfg
    parser = configparser.ConfigParser()
    parser.optionxform = str
    if not parser.read(path):
        raise FileNotFoundError(path)
    updates = {}
    for section in parser.sections():
        if section == "pipeline":
            for key, text in parser[section].items():
                if key != "package_rate":
                    raise KeyError(f"[pipeline] unknown key {key!r}")
                updates["package_rate"] = float(text)
            continue
        if section == "gains":
            g = cfg.control.gains
            vals = {k: _parse(v, getattr(g, k)) for k, v in parser[section].items()}
            updates.setdefault("control", {})["gains"] = dataclasses.replace(g, **vals)
            continue
        if section not in _SECTIONS:
            raise KeyError(f"unknown config section [{section}]")
        current = getattr(cfg, section)
        vals = updates.setdefault(section, {})
        names = {f.name for f in dataclasses.fields(current)}
        for key, text in parser[section].items():
            if key not in names:
                raise KeyError(f"[{section}] unknown key {key!r}")
            vals[key] = _parse(text, getattr(current, key))
    return cfg.replace(**updates)


def dump_config(cfg: PipelineConfig, path: str | Path) -> None:
    parser = configparser.ConfigParser()
    parser.optionxform = str
    parser["pipeline"] = {"package_rate": str(cfg.package_rate)}
    for section in _SECTIONS:
        obj = getattr(cfg, section)
        parser[section] = {f.name: _format(getattr(obj, f.name))
                           for f in dataclasses.fields(obj) if f.name != "gains"}
    parser["gains"] = {f.name: _format(getattr(cfg.control.gains, f.name))
                       for f in dataclasses.fields(cfg.control.gains)}
    with open(path, "w") as fh:
        parser.write(fh)
