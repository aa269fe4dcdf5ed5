"""Scenario configuration: a flat key-value file with a strict schema.

The file format is one ``key = value`` pair per line, ``#`` comments, blank
lines ignored. Unknown keys are hard errors so a typo in a noise parameter
cannot silently invalidate an experiment. Every key can also be overridden
from the command line via ``--set key=value``.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, fields

from .mapgrid import GeoRect


class ConfigError(ValueError):
    """Invalid scenario configuration (bad key, value, or combination)."""


def _parse_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("true", "1", "yes", "on"):
        return True
    if v in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


@dataclass
class ScenarioConfig:
    # map and world
    lat_min: float = 40.0
    lat_max: float = 40.00396
    lon_min: float = -105.0
    lon_max: float = -104.99483
    cell_interval: float = 5.0
    world_kind: str = "smooth"  # smooth | flat (flat = uninformative descriptors)
    world_seed: int = 7
    world_features: int = 24
    world_feature_dim: int = 16
    world_length_scale: float = 25.0
    world_view_noise: float = 0.05
    corridor: bool = False
    corridor_width: float = 10.0
    corridor_gain: float = 1.0
    alias_regions: str = ""  # "src_x,src_y,dst_x,dst_y,radius;..."

    # descriptor pipeline
    pipeline_variant: str = "dual"  # dual | shared
    clusters: int = 8
    reduced_dim: int = 32
    hidden_dim: int = 16
    normalize_descriptors: bool = True
    params_seed: int = 11
    params_file: str = ""

    # trajectory
    trajectory_file: str = ""
    traj_kind: str = "loop"  # loop | line
    traj_steps: int = 200
    traj_length: float = 1000.0

    # filter
    particles: int = 1000
    master_seed: int = 1
    measurement_mode: str = "corner-sum"  # corner-sum | bilinear
    probability_floor: float = 1e-12
    sigma_trans: float = 0.1
    sigma_trans_rate: float = 0.02
    sigma_rot_deg: float = 0.5
    sigma_rot_rate: float = 0.01
    # simulated odometry corruption; the filter's own sigmas above are kept
    # slightly inflated relative to these, as a real deployment would tune them
    odom_sigma_trans: float = 0.1
    odom_sigma_trans_rate: float = 0.02
    odom_sigma_rot_deg: float = 0.3
    odom_sigma_rot_rate: float = 0.01
    init_spread_xy: float = 2.0
    init_spread_theta_deg: float = 1.0
    ess_threshold: float = 0.0  # 0 disables the gate: resample every step

    # outputs
    out_dir: str = "out"
    log_format: str = "csv"  # csv | jsonl
    heatmap_every: int = 0
    heatmap_contrast: str = "exponential"  # linear | exponential

    # retrieval evaluation
    eval_queries: int = 200
    eval_top_k: int = 20
    eval_percent: float = 1.0
    eval_thresholds: str = "5,10,25,50,100"
    loss_alpha: float = 10.0

    def geo_bounds(self) -> GeoRect:
        return GeoRect(self.lat_min, self.lat_max, self.lon_min, self.lon_max)

    def validate(self) -> None:
        if self.cell_interval <= 0:
            raise ConfigError("cell_interval must be positive")
        if self.world_kind not in ("smooth", "flat"):
            raise ConfigError(f"world_kind must be smooth or flat, got {self.world_kind!r}")
        if self.pipeline_variant not in ("dual", "shared"):
            raise ConfigError(f"pipeline_variant must be dual or shared, got {self.pipeline_variant!r}")
        if self.traj_kind not in ("loop", "line"):
            raise ConfigError(f"traj_kind must be loop or line, got {self.traj_kind!r}")
        if self.measurement_mode not in ("corner-sum", "bilinear"):
            raise ConfigError("measurement_mode must be corner-sum or bilinear")
        if self.log_format not in ("csv", "jsonl"):
            raise ConfigError("log_format must be csv or jsonl")
        if self.heatmap_contrast not in ("linear", "exponential"):
            raise ConfigError("heatmap_contrast must be linear or exponential")
        if self.particles < 1:
            raise ConfigError("particles must be >= 1")
        if self.traj_steps < 1:
            raise ConfigError("traj_steps must be >= 1")
        if not (0 < self.probability_floor < 1):
            raise ConfigError("probability_floor must be in (0, 1)")
        if self.eval_queries < 1 or self.eval_top_k < 1:
            raise ConfigError("eval_queries and eval_top_k must be >= 1")
        if not (0 < self.eval_percent <= 100):
            raise ConfigError("eval_percent must be in (0, 100]")
        for name in (
            "sigma_trans", "sigma_trans_rate", "sigma_rot_deg", "sigma_rot_rate",
            "odom_sigma_trans", "odom_sigma_trans_rate", "odom_sigma_rot_deg",
            "odom_sigma_rot_rate", "init_spread_xy", "init_spread_theta_deg",
        ):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ConfigError(f"{name} must be finite and non-negative")
        for name in ("trajectory_file", "params_file"):
            path = getattr(self, name)
            if path and not os.path.exists(path):
                raise ConfigError(f"{name} does not exist: {path}")
        try:
            self.parsed_aliases()
            self.parsed_thresholds()
        except ValueError as e:
            raise ConfigError(str(e)) from None

    def parsed_aliases(self) -> list[tuple[float, float, float, float, float]]:
        out = []
        if not self.alias_regions.strip():
            return out
        for chunk in self.alias_regions.split(";"):
            parts = [p for p in chunk.strip().split(",") if p]
            if len(parts) != 5:
                raise ValueError(f"alias region needs 5 numbers, got {chunk!r}")
            out.append(tuple(float(p) for p in parts))
        return out

    def parsed_thresholds(self) -> list[float]:
        vals = [float(p) for p in self.eval_thresholds.split(",") if p.strip()]
        if not vals:
            raise ValueError("eval_thresholds must list at least one distance")
        return vals


_FIELDS = {f.name: f.type for f in fields(ScenarioConfig)}


def _convert(key: str, raw: str):
    kind = _FIELDS[key]
    try:
        if kind == "bool":
            return _parse_bool(raw)
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        return raw
    except ValueError as e:
        raise ConfigError(f"bad value for {key}: {e}") from None


def apply_overrides(cfg: ScenarioConfig, overrides: dict[str, str]) -> ScenarioConfig:
    for key, raw in overrides.items():
        if key not in _FIELDS:
            raise ConfigError(f"unknown config key {key!r}")
        setattr(cfg, key, _convert(key, raw))
    return cfg


def load_config(path: str, overrides: dict[str, str] | None = None) -> ScenarioConfig:
    cfg = ScenarioConfig()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line.rstrip()!r}")
            key, raw = (part.strip() for part in text.split("=", 1))
            if key not in _FIELDS:
                raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
            setattr(cfg, key, _convert(key, raw))
    if overrides:
        apply_overrides(cfg, overrides)
    cfg.validate()
    return cfg


def write_config(cfg: ScenarioConfig, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for f in fields(ScenarioConfig):
            fh.write(f"{f.name} = {getattr(cfg, f.name)}\n")
