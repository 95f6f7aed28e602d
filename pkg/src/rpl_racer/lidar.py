"""1D lidar simulation by raycasting against the occupancy grid."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .grid import OccupancyGrid

MIN_RANGE = 1e-6


@dataclass(frozen=True)
class LidarConfig:
    n_beams: int = 1080
    fov: float = math.radians(270.0)   # total field of view, centered on psi
    max_range: float = 30.0

    def beam_offsets(self) -> np.ndarray:
        """Beam angles relative to the vehicle heading, -fov/2 .. +fov/2."""
        return np.linspace(-0.5 * self.fov, 0.5 * self.fov, self.n_beams)


@dataclass(frozen=True)
class LidarScan:
    ranges: np.ndarray
    fov: float
    max_range: float


def scan(grid: OccupancyGrid, pose, cfg: LidarConfig = LidarConfig(),
         cast=None) -> LidarScan:
    """Cast all beams from pose = (x, y, psi).

    Each range is the distance along the beam to the entering face of the
    first occupied cell, or max_range. A pose inside an occupied cell yields
    near-zero ranges. `cast` overrides the kernel backend (used by the
    benchmark and backend-agreement tests).
    """
    x, y, psi = pose
    gx, gy = grid.world_to_grid(x, y)
    angles = cfg.beam_offsets() + (psi - grid.origin[2])
    cast = cast or kernels.cast_rays
    ranges = cast(grid.occupied, gx, gy, angles, cfg.max_range,
                  grid.resolution)
    return LidarScan(ranges=np.maximum(ranges, MIN_RANGE),
                     fov=cfg.fov, max_range=cfg.max_range)
