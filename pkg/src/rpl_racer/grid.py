"""Occupancy grid: map loading, frame transforms, footprint collision."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .dynamics import VehicleState
from .errors import MapError
from .params import VehicleParams


@dataclass
class OccupancyGrid:
    """Rasterized track map.

    occupied is indexed [row, col] with row 0 at the *bottom* of the map
    (world +y); the cell (col, row) covers
    [col*res, (col+1)*res) x [row*res, (row+1)*res) in the grid frame. The
    grid frame is placed in the world by the origin pose (x, y, theta).
    """

    occupied: np.ndarray
    resolution: float
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        self.occupied = np.ascontiguousarray(self.occupied, dtype=np.uint8)
        if self.resolution <= 0:
            raise MapError("resolution must be > 0")

    @property
    def shape(self):
        return self.occupied.shape

    @property
    def extent(self):
        """World-frame size (width, height) in meters for theta = 0."""
        ny, nx = self.occupied.shape
        return nx * self.resolution, ny * self.resolution

    def world_to_grid(self, x, y):
        """World point -> continuous grid-frame coordinates in meters."""
        x0, y0, th = self.origin
        dx, dy = x - x0, y - y0
        c, s = math.cos(th), math.sin(th)
        return c * dx + s * dy, -s * dx + c * dy

    def cell_index(self, x, y):
        gx, gy = self.world_to_grid(x, y)
        return (int(math.floor(gx / self.resolution)),
                int(math.floor(gy / self.resolution)))

    def is_occupied_world(self, x, y, outside=True):
        """Occupancy at a world point; cells outside the grid count per
        `outside`."""
        col, row = self.cell_index(x, y)
        ny, nx = self.occupied.shape
        if 0 <= col < nx and 0 <= row < ny:
            return bool(self.occupied[row, col])
        return outside


def load_map(image_bytes: bytes, metadata: dict) -> OccupancyGrid:
    """Build a grid from a grayscale raster and its metadata record.

    Pixel luminance >= free_thresh (on a 0-1 scale) marks a free cell.
    Image row 0 is the top of the map, so rows are flipped to put row 0 at
    world-frame bottom.
    """
    for key in ("resolution", "origin", "free_thresh"):
        if key not in metadata:
            raise MapError(f"map metadata missing field '{key}'")
    origin = tuple(float(v) for v in metadata["origin"])
    if len(origin) != 3:
        raise MapError("map origin must be [x, y, theta]")
    resolution = float(metadata["resolution"])
    free_thresh = float(metadata["free_thresh"])

    try:
        img = Image.open(io.BytesIO(image_bytes)).convert("L")
    except Exception as exc:
        raise MapError(f"cannot decode map image: {exc}") from exc
    lum = np.asarray(img, dtype=np.float64) / 255.0
    if "width" in metadata and "height" in metadata:
        want = (int(metadata["height"]), int(metadata["width"]))
        if lum.shape != want:
            raise MapError(
                f"image size {lum.shape[::-1]} does not match metadata "
                f"{want[::-1]}"
            )
    occupied = np.flipud(lum < free_thresh)
    return OccupancyGrid(occupied=occupied, resolution=resolution,
                         origin=origin)


def footprint_corners(state: VehicleState, params: VehicleParams):
    """World-frame corners of the oriented rectangular footprint.

    The body rectangle (l x w) is centered on the wheelbase midpoint plus
    the symmetric overhang, i.e. offset (l_f - l_r)/2 ahead of the COG.
    """
    c, s = math.cos(state.psi), math.sin(state.psi)
    off = 0.5 * (params.l_f - params.l_r)
    cx = state.x + off * c
    cy = state.y + off * s
    hl, hw = 0.5 * params.l, 0.5 * params.w
    corners = []
    for a, b in ((hl, hw), (hl, -hw), (-hl, -hw), (-hl, hw)):
        corners.append((cx + a * c - b * s, cy + a * s + b * c))
    return corners


def collision_check(grid: OccupancyGrid, state: VehicleState,
                    params: VehicleParams) -> bool:
    """True iff the oriented footprint overlaps an occupied or off-map cell.

    Exact rectangle-vs-cell overlap via the separating axis test, applied to
    every cell in the footprint's grid-frame bounding box.
    """
    res = grid.resolution
    ny, nx = grid.occupied.shape
    x0, y0, th = grid.origin

    # footprint center and axes expressed in the grid frame
    c, s = math.cos(state.psi), math.sin(state.psi)
    off = 0.5 * (params.l_f - params.l_r)
    cx, cy = grid.world_to_grid(state.x + off * c, state.y + off * s)
    a = state.psi - th
    ux, uy = math.cos(a), math.sin(a)      # long axis
    vx, vy = -uy, ux                       # lateral axis
    hl, hw = 0.5 * params.l, 0.5 * params.w

    half = 0.5 * res
    rx = hl * abs(ux) + hw * abs(vx)
    ry = hl * abs(uy) + hw * abs(vy)
    c_lo = int(math.floor((cx - rx) / res))
    c_hi = int(math.floor((cx + rx) / res))
    r_lo = int(math.floor((cy - ry) / res))
    r_hi = int(math.floor((cy + ry) / res))

    cols = np.arange(c_lo, c_hi + 1)
    rows = np.arange(r_lo, r_hi + 1)
    ccx = (cols + 0.5) * res - cx                 # cell centers rel. footprint
    ccy = (rows + 0.5) * res - cy
    dx = ccx[None, :] + np.zeros((rows.size, 1))
    dy = ccy[:, None] + np.zeros((1, cols.size))

    # SAT over grid axes and footprint axes
    overlap = (
        (np.abs(dx) <= rx + half)
        & (np.abs(dy) <= ry + half)
        & (np.abs(dx * ux + dy * uy) <= hl + half * (abs(ux) + abs(uy)))
        & (np.abs(dx * vx + dy * vy) <= hw + half * (abs(vx) + abs(vy)))
    )
    if not overlap.any():
        return False

    rr, cc = np.nonzero(overlap)
    grow = rows[rr]
    gcol = cols[cc]
    outside = (grow < 0) | (grow >= ny) | (gcol < 0) | (gcol >= nx)
    if outside.any():
        return True
    return bool(grid.occupied[grow, gcol].any())
