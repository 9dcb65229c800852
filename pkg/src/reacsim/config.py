"""YAML run configuration with the REACSIM_CONFIG environment fallback."""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .engine import PredictorSpec, SimConfig
from .kinematics import KinematicBounds
from .metrics import MissThresholds

ENV_VAR = "REACSIM_CONFIG"


class ConfigError(ValueError):
    """Raised for unreadable or inconsistent configuration input."""


@dataclass
class RunConfig:
    """Everything a simulate/ablation invocation needs besides data paths."""

    sim: SimConfig = field(default_factory=SimConfig)
    predictor: PredictorSpec = field(default_factory=PredictorSpec)
    thresholds: MissThresholds = field(default_factory=MissThresholds)
    seeds: tuple[int, ...] = (0,)
    parallelism: int = field(default_factory=lambda: os.cpu_count() or 1)


def _take(section: dict, known: dict, where: str) -> dict:
    unknown = set(section) - set(known)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(sorted(unknown))}")
    merged = dict(known)
    merged.update(section)
    return merged


def _parse(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError(f"config root must be a mapping, got {type(data).__name__}")
    sections = _take(
        data,
        {
            "simulation": {},
            "smoothing": {},
            "kinematics": {},
            "spline": {},
            "predictor": {},
            "miss_thresholds": {},
            "seeds": [0],
            "parallelism": os.cpu_count() or 1,
        },
        "config",
    )
    sim_keys = _take(
        sections["simulation"] or {},
        {"t_obs": 10, "t_horizon": 30, "t_update": 1, "t_sim": 50, "dt": 0.1,
         "observe_radius": 70.0},
        "simulation",
    )
    smooth = _take(sections["smoothing"] or {}, {"alpha": 0.2}, "smoothing")
    kin = _take(
        sections["kinematics"] or {},
        {"a_max": 8.0, "beta_max": 0.6, "lr_ratio": 0.5, "geometry_policy": "fixed-ratio"},
        "kinematics",
    )
    spl = _take(sections["spline"] or {}, {"v_eps": 0.1}, "spline")
    pred = _take(
        sections["predictor"] or {},
        {"name": "constant-velocity", "noise": 0.0, "noise_seed": 0, "command": [],
         "timeout_ms": 2000},
        "predictor",
    )
    thr = _take(
        sections["miss_thresholds"] or {},
        {"lateral": 1.0, "longitudinal": 2.0, "longitudinal_default": 2.0},
        "miss_thresholds",
    )

    sim = SimConfig(
        t_obs=int(sim_keys["t_obs"]),
        t_horizon=int(sim_keys["t_horizon"]),
        t_update=int(sim_keys["t_update"]),
        t_sim=int(sim_keys["t_sim"]),
        dt=float(sim_keys["dt"]),
        observe_radius=float(sim_keys["observe_radius"]),
        alpha=float(smooth["alpha"]),
        bounds=KinematicBounds(float(kin["a_max"]), float(kin["beta_max"])),
        lr_ratio=float(kin["lr_ratio"]),
        geometry_policy=str(kin["geometry_policy"]),
        v_eps=float(spl["v_eps"]),
    )
    predictor = PredictorSpec(
        name=str(pred["name"]),
        noise=float(pred["noise"]),
        command=tuple(str(c) for c in pred["command"]),
        timeout_ms=int(pred["timeout_ms"]),
    )
    lon = thr["longitudinal"]
    if isinstance(lon, (int, float)):
        thresholds = MissThresholds(lateral=float(thr["lateral"]), longitudinal_default=float(lon))
    else:
        thresholds = MissThresholds(
            lateral=float(thr["lateral"]),
            longitudinal=tuple((float(v), float(t)) for v, t in lon),
            longitudinal_default=float(thr["longitudinal_default"]),
        )
    seeds = tuple(int(s) for s in sections["seeds"])
    if not seeds:
        raise ConfigError("seeds must not be empty")
    return RunConfig(
        sim=sim,
        predictor=predictor,
        thresholds=thresholds,
        seeds=seeds,
        parallelism=int(sections["parallelism"]),
    )


def load_config(path: str | Path | None = None) -> RunConfig:
    """Load configuration from a path, the REACSIM_CONFIG file, or defaults."""
    if path is None:
        path = os.environ.get(ENV_VAR)
    if path is None:
        return RunConfig()
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if data is None:
        return RunConfig()
    try:
        return _parse(data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
