"""Training/evaluation configuration loading and environment construction."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .env import RacingEnv, TrackAssets, VectorEnv, load_track
from .errors import AssetError, ConfigError
from .lidar import LidarConfig
from .observation import ObservationLayout
from .params import VehicleParams
from .policy import ResidualScale
from .ppo import GAEConfig, PPOConfig
from .pursuit import PurePursuitConfig


@dataclass
class TrainConfig:
    tracks: list
    seed: int = 0
    n_envs: int = 36
    checkpoint_interval: int = 10
    n_waypoints: int = 20
    horizon: float = 30.0
    lookahead: float = 0.82
    use_vehicle_length: bool = False
    max_laps: int = 2
    residual_scale: tuple = (0.05, 1.0)
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    lidar: LidarConfig = field(default_factory=LidarConfig)
    ppo: PPOConfig = field(default_factory=PPOConfig)
    gae: GAEConfig = field(default_factory=GAEConfig)

    def snapshot(self) -> dict:
        d = {
            "tracks": [str(t) for t in self.tracks],
            "seed": self.seed,
            "n_envs": self.n_envs,
            "checkpoint_interval": self.checkpoint_interval,
            "n_waypoints": self.n_waypoints,
            "horizon": self.horizon,
            "lookahead": self.lookahead,
            "use_vehicle_length": self.use_vehicle_length,
            "max_laps": self.max_laps,
            "residual_scale": list(self.residual_scale),
            "vehicle": asdict(self.vehicle),
            "lidar": {"n_beams": self.lidar.n_beams,
                      "fov_deg": math.degrees(self.lidar.fov),
                      "max_range": self.lidar.max_range},
            "ppo": asdict(self.ppo),
            "gae": asdict(self.gae),
        }
        return d


def load_train_config(path, overrides: dict | None = None) -> TrainConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    if overrides:
        raw = {**raw, **{k: v for k, v in overrides.items() if v is not None}}
    return train_config_from_dict(raw, base_dir=path.parent)


def train_config_from_dict(raw: dict, base_dir=None) -> TrainConfig:
    if "tracks" not in raw or not raw["tracks"]:
        raise ConfigError("config requires a non-empty 'tracks' list")
    base = Path(base_dir) if base_dir is not None else Path(".")
    tracks = []
    for t in raw["tracks"]:
        p = Path(t)
        tracks.append(p if p.is_absolute() else base / p)

    try:
        vehicle = VehicleParams.from_dict(raw.get("vehicle", {}))
        lidar_raw = raw.get("lidar", {})
        lidar = LidarConfig(
            n_beams=int(lidar_raw.get("n_beams", 1080)),
            fov=math.radians(float(lidar_raw.get("fov_deg", 270.0))),
            max_range=float(lidar_raw.get("max_range", 30.0)),
        )
        ppo = PPOConfig(**raw.get("ppo", {}))
        gae = GAEConfig(**raw.get("gae", {}))
        scale = tuple(raw.get("residual_scale", (0.05, 1.0)))
        cfg = TrainConfig(
            tracks=tracks,
            seed=int(raw.get("seed", 0)),
            n_envs=int(raw.get("n_envs", 36)),
            checkpoint_interval=int(raw.get("checkpoint_interval", 10)),
            n_waypoints=int(raw.get("n_waypoints", 20)),
            horizon=float(raw.get("horizon", 30.0)),
            lookahead=float(raw.get("lookahead", 0.82)),
            use_vehicle_length=bool(raw.get("use_vehicle_length", False)),
            max_laps=int(raw.get("max_laps", 2)),
            residual_scale=scale,
            vehicle=vehicle,
            lidar=lidar,
            ppo=ppo,
            gae=gae,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc
    if cfg.n_envs <= 0:
        raise ConfigError("n_envs must be > 0")
    if len(scale) != 2 or any(s <= 0 for s in scale):
        raise ConfigError("residual_scale must be two positive values")
    return cfg


def make_env(assets: TrackAssets, cfg: TrainConfig, seed: int) -> RacingEnv:
    layout = ObservationLayout(n_beams=cfg.lidar.n_beams,
                               n_waypoints=cfg.n_waypoints)
    return RacingEnv(
        assets=assets,
        params=cfg.vehicle,
        lidar_cfg=cfg.lidar,
        pp_cfg=PurePursuitConfig.from_params(
            cfg.vehicle, lookahead=cfg.lookahead,
            use_vehicle_length=cfg.use_vehicle_length),
        scale=ResidualScale(*cfg.residual_scale),
        layout=layout,
        horizon=cfg.horizon,
        max_laps=cfg.max_laps,
        seed=seed,
    )


def build_envs(cfg: TrainConfig):
    """Load track assets and pin each env to a track in rotation."""
    assets = [load_track(t, v_max=cfg.vehicle.v_max) for t in cfg.tracks]
    seeds = np.random.SeedSequence(cfg.seed).generate_state(cfg.n_envs)
    envs = [
        make_env(assets[i % len(assets)], cfg, int(seeds[i]))
        for i in range(cfg.n_envs)
    ]
    layout = envs[0].layout
    return VectorEnv(envs), layout
