"""Synthetic closed tracks (circle, stadium oval) for tests and demos.

Tracks can be built in memory or written as a standard asset directory
(map.yaml + map.png + raceline.csv) exercising the real load path.
"""

from __future__ import annotations

import io
import math
from pathlib import Path

import numpy as np
import yaml
from PIL import Image
from scipy.spatial import cKDTree

from .dynamics import wrap_angle
from .env import TrackAssets
from .grid import OccupancyGrid
from .raceline import RacingLine, Waypoint


def _corridor_grid(centerline: np.ndarray, width: float, resolution: float,
                   pad: float = 1.0) -> OccupancyGrid:
    """Occupancy grid that is free within width/2 of the centerline."""
    lo = centerline.min(axis=0) - width / 2 - pad
    hi = centerline.max(axis=0) + width / 2 + pad
    nx = int(math.ceil((hi[0] - lo[0]) / resolution))
    ny = int(math.ceil((hi[1] - lo[1]) / resolution))
    xs = lo[0] + (np.arange(nx) + 0.5) * resolution
    ys = lo[1] + (np.arange(ny) + 0.5) * resolution
    gx, gy = np.meshgrid(xs, ys)
    centers = np.column_stack([gx.ravel(), gy.ravel()])
    dist, _ = cKDTree(centerline).query(centers, workers=-1)
    occupied = (dist.reshape(ny, nx) > width / 2).astype(np.uint8)
    return OccupancyGrid(occupied=occupied, resolution=resolution,
                         origin=(float(lo[0]), float(lo[1]), 0.0))


def _line_from_path(path_fn, length: float, speed, spacing: float):
    """Sample a closed path (arclength -> x, y, heading, kappa)."""
    n = max(int(round(length / spacing)), 8)
    wps = []
    for i in range(n):
        s = length * i / n
        x, y, heading, kappa = path_fn(s)
        v = speed(s) if callable(speed) else speed
        wps.append(Waypoint(s=s, x=x, y=y, heading=wrap_angle(heading),
                            v=v, kappa=kappa))
    return RacingLine(wps)


def make_circle_track(radius: float = 20.0, width: float = 5.0,
                      resolution: float = 0.1, speed: float = 3.0,
                      spacing: float = 0.5, name: str = "circle") -> TrackAssets:
    """Counter-clockwise circular track centered at the origin."""
    def path(s):
        a = s / radius
        return (radius * math.cos(a), radius * math.sin(a),
                a + math.pi / 2, 1.0 / radius)

    length = 2.0 * math.pi * radius
    line = _line_from_path(path, length, speed, spacing)
    dense = np.array([path(s)[:2] for s in np.arange(0, length, resolution / 2)])
    return TrackAssets(name=name, grid=_corridor_grid(dense, width, resolution),
                       line=line)


def make_oval_track(straight: float = 30.0, radius: float = 6.0,
                    width: float = 5.0, resolution: float = 0.1,
                    speed=2.5, spacing: float = 0.5,
                    name: str = "oval") -> TrackAssets:
    """Counter-clockwise stadium: two straights joined by semicircles."""
    def path(s):
        if s < straight:                       # bottom straight, heading +x
            return (s, -radius, 0.0, 0.0)
        s2 = s - straight
        arc = math.pi * radius
        if s2 < arc:                           # right semicircle
            a = s2 / radius - math.pi / 2
            return (straight + radius * math.cos(a), radius * math.sin(a),
                    a + math.pi / 2, 1.0 / radius)
        s3 = s2 - arc
        if s3 < straight:                      # top straight, heading -x
            return (straight - s3, radius, math.pi, 0.0)
        s4 = s3 - straight                     # left semicircle
        a = s4 / radius + math.pi / 2
        return (radius * math.cos(a), radius * math.sin(a),
                a + math.pi / 2, 1.0 / radius)

    length = 2.0 * straight + 2.0 * math.pi * radius
    line = _line_from_path(path, length, speed, spacing)
    dense = np.array([path(s)[:2]
                      for s in np.arange(0, length, resolution / 2)])
    return TrackAssets(name=name, grid=_corridor_grid(dense, width, resolution),
                       line=line)


def write_track(assets: TrackAssets, out_dir) -> Path:
    """Write a track as a loadable asset directory."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    occ = assets.grid.occupied.astype(bool)
    img = Image.fromarray(np.flipud(np.where(occ, 0, 255)).astype(np.uint8))
    img.save(out_dir / "map.png")

    meta = {
        "image": "map.png",
        "resolution": assets.grid.resolution,
        "origin": list(assets.grid.origin),
        "free_thresh": 0.5,
        "width": int(occ.shape[1]),
        "height": int(occ.shape[0]),
    }
    (out_dir / "map.yaml").write_text(yaml.safe_dump(meta, sort_keys=False))

    buf = io.StringIO()
    buf.write("# s_m; x_m; y_m; psi_rad; kappa_radpm; vx_mps\n")
    for w in assets.line.waypoints:
        buf.write(f"{w.s:.6f}; {w.x:.6f}; {w.y:.6f}; {w.heading:.6f}; "
                  f"{w.kappa:.6f}; {w.v:.6f}\n")
    (out_dir / "raceline.csv").write_text(buf.getvalue())
    return out_dir
