"""Racing environment: closed-loop simulator with residual actions."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .dynamics import (HighLevelAction, VehicleState, low_level_control,
                       step_dynamics)
from .errors import AssetError
from .grid import OccupancyGrid, collision_check, load_map
from .lidar import LidarConfig, scan
from .observation import ObservationBuilder, ObservationLayout
from .params import VehicleParams
from .policy import ResidualScale, compute_reward, residual_compose
from .pursuit import PurePursuitConfig, base_action
from .raceline import LapTimer, RacingLine, load_racing_line, random_start, waypoints_ahead


@dataclass
class TrackAssets:
    name: str
    grid: OccupancyGrid
    line: RacingLine


def load_track(track_dir, v_max: float = 8.0) -> TrackAssets:
    """Load a track directory: map.yaml + map image + raceline.csv."""
    track_dir = Path(track_dir)
    meta_path = track_dir / "map.yaml"
    line_path = track_dir / "raceline.csv"
    if not track_dir.is_dir():
        raise AssetError(f"track directory not found: {track_dir}")
    for p in (meta_path, line_path):
        if not p.is_file():
            raise AssetError(f"missing track asset: {p}")
    meta = yaml.safe_load(meta_path.read_text())
    image_path = track_dir / meta.get("image", "map.png")
    if not image_path.is_file():
        raise AssetError(f"missing track asset: {image_path}")
    grid = load_map(image_path.read_bytes(), meta)
    line = load_racing_line(line_path.read_bytes(), v_max=v_max)
    return TrackAssets(name=track_dir.name, grid=grid, line=line)


class RacingEnv:
    """One car on one track at 100 Hz.

    step() takes the residual policy output in [-1, 1]^2 (or None for
    base-only driving), composes it with the pure pursuit action, and
    advances the simulation. Episodes end on collision or after
    max_laps completed laps.
    """

    DT = 0.01

    def __init__(self, assets: TrackAssets, params: VehicleParams = None,
                 lidar_cfg: LidarConfig = None,
                 pp_cfg: PurePursuitConfig = None,
                 scale: ResidualScale = None,
                 layout: ObservationLayout = None,
                 horizon: float = 30.0, max_laps: int = 2, seed: int = 0):
        self.assets = assets
        self.params = params or VehicleParams()
        self.lidar_cfg = lidar_cfg or LidarConfig()
        self.pp_cfg = pp_cfg or PurePursuitConfig.from_params(self.params)
        self.scale = scale or ResidualScale()
        self.layout = layout or ObservationLayout(
            n_beams=self.lidar_cfg.n_beams)
        self.horizon = horizon
        self.max_laps = max_laps
        self.rng = np.random.default_rng(seed)
        self.builder = ObservationBuilder(layout=self.layout)
        self.state: VehicleState | None = None
        self.timer: LapTimer | None = None
        self._cursor = None
        self._a_base: HighLevelAction | None = None
        self._a_applied: HighLevelAction | None = None
        self._v_body_prev = (0.0, 0.0)

    @property
    def episode_steps(self):
        return self.timer.steps if self.timer else 0

    def _observe(self, a_applied_prev: HighLevelAction):
        s = self.state
        self._cursor = self.assets.line.nearest_index(
            (s.x, s.y), cursor=self._cursor)
        self._a_base = base_action(self.assets.line, s, self.pp_cfg,
                                   self.params, cursor=self._cursor)
        sc = scan(self.assets.grid, (s.x, s.y, s.psi), self.lidar_cfg)
        w_rel = waypoints_ahead(self.assets.line, s, horizon=self.horizon,
                                n_points=self.layout.n_waypoints,
                                cursor=self._cursor)
        v_body = s.v_body
        accels = ((v_body[0] - self._v_body_prev[0]) / self.DT,
                  (v_body[1] - self._v_body_prev[1]) / self.DT)
        obs = self.builder.build(sc.ranges, w_rel, s, accels, self._a_base,
                                 a_applied_prev)
        self._v_body_prev = v_body
        return obs

    def reset(self, start_index: int | None = None):
        line = self.assets.line
        if start_index is None:
            self.state = random_start(line, self.assets.grid, self.rng,
                                      self.params)
        else:
            w = line.waypoints[start_index % len(line)]
            self.state = VehicleState(x=w.x, y=w.y, psi=w.heading, v=w.v)
        self.timer = LapTimer(line=line, dt=self.DT, armed=False)
        self._cursor = None
        self.builder.reset()
        self._v_body_prev = self.state.v_body
        # previous applied action defaults to the base action on reset
        cursor = line.nearest_index((self.state.x, self.state.y))
        a_b0 = base_action(line, self.state, self.pp_cfg, self.params,
                           cursor=cursor)
        self._a_applied = a_b0
        obs = self._observe(a_b0)
        return obs, {"base_action": self._a_base, "state": self.state}

    def step(self, residual=None):
        if self.state is None:
            raise RuntimeError("reset() must be called before step()")
        a_base = self._a_base
        if residual is None:
            a_rb = a_base
            a_res = np.zeros(2)
        else:
            a_res = np.asarray(residual, dtype=np.float64)
            a_rb = residual_compose(a_res, self.scale, a_base, self.params)

        inp = low_level_control(self.state, a_rb, self.params)
        prev = self.state
        self.state = step_dynamics(prev, inp, self.DT, self.params)
        self.timer.update(prev, self.state, self.DT)
        collided = collision_check(self.assets.grid, self.state, self.params)

        v_x, v_y = self.state.v_body
        reward = compute_reward(v_x, v_y, collided)
        terminated = collided or self.timer.laps >= self.max_laps

        self._a_applied = a_rb
        obs = self._observe(a_rb)
        info = {
            "state": self.state,
            "collision": collided,
            "laps": self.timer.laps,
            "lap_times": self.timer.lap_times,
            "base_action": a_base,
            "applied_action": a_rb,
            "residual": a_res,
            "model_input": inp,
        }
        return obs, reward, terminated, info


class VectorEnv:
    """Synchronous collection of independently-seeded RacingEnv instances.

    Terminated environments reset in place; the returned observation is the
    first of the new episode, with the done flag reported for the step that
    ended.
    """

    def __init__(self, envs: list[RacingEnv]):
        if not envs:
            raise ValueError("need at least one environment")
        self.envs = envs
        self.obs_dim = envs[0].layout.dim

    def __len__(self):
        return len(self.envs)

    def reset(self):
        obs = np.stack([env.reset()[0] for env in self.envs])
        return obs

    def step(self, residuals):
        n = len(self.envs)
        obs = np.empty((n, self.obs_dim))
        rewards = np.empty(n)
        dones = np.zeros(n, dtype=bool)
        infos = []
        for i, env in enumerate(self.envs):
            res = None if residuals is None else residuals[i]
            try:
                o, r, d, info = env.step(res)
            except ValueError:
                # diverged (non-finite) dynamics: reset this env, flag done
                o, info = env.reset()
                info = {**info, "diverged": True}
                r, d = 0.0, True
            if d:
                o, _ = env.reset()
            obs[i] = o
            rewards[i] = r
            dones[i] = d
            infos.append(info)
        return obs, rewards, dones, infos
