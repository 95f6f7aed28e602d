"""Racing lines: waypoint loading, queries, random starts, lap timing."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .dynamics import VehicleState
from .errors import RacingLineError, StartPlacementError
from .grid import OccupancyGrid, collision_check
from .params import VehicleParams

# CSV column order of the racetrack asset convention:
#   s; x; y; heading; curvature; speed [; accel]
DEFAULT_COLUMNS = {"s": 0, "x": 1, "y": 2, "heading": 3, "kappa": 4, "v": 5}


@dataclass(frozen=True)
class Waypoint:
    s: float            # arclength [m]
    x: float
    y: float
    heading: float      # rad
    v: float            # planned speed [m/s]
    kappa: float = 0.0  # curvature [1/m]


class RacingLine:
    """Cyclic sequence of waypoints with strictly increasing arclength."""

    def __init__(self, waypoints: list[Waypoint]):
        if not waypoints:
            raise RacingLineError("racing line has no waypoints")
        self.waypoints = list(waypoints)
        self.s = np.array([w.s for w in waypoints])
        self.xy = np.array([[w.x, w.y] for w in waypoints])
        self.heading = np.array([w.heading for w in waypoints])
        self.v = np.array([w.v for w in waypoints])
        self.kappa = np.array([w.kappa for w in waypoints])
        if len(waypoints) > 1 and not np.all(np.diff(self.s) > 0):
            raise RacingLineError("waypoint arclength must be strictly increasing")
        if np.any(self.v <= 0):
            raise RacingLineError("planned speeds must be > 0")
        closing = float(np.linalg.norm(self.xy[-1] - self.xy[0]))
        self.length = float(self.s[-1] - self.s[0]) + closing

    def __len__(self):
        return len(self.waypoints)

    def nearest_index(self, position, cursor=None, window=40) -> int:
        """Index of the Euclidean-nearest waypoint.

        With a cursor, only a window behind/ahead of it is scanned (O(1) at
        the control rate) and distance ties break toward the waypoint
        further ahead of the cursor.
        """
        n = len(self.waypoints)
        px, py = position
        if cursor is None or window >= n:
            d2 = (self.xy[:, 0] - px) ** 2 + (self.xy[:, 1] - py) ** 2
            idx = np.arange(n)
            base = None
        else:
            idx = (cursor + np.arange(-window // 4, window)) % n
            d2 = ((self.xy[idx, 0] - px) ** 2
                  + (self.xy[idx, 1] - py) ** 2)
            base = cursor
        dmin = d2.min()
        ties = idx[np.nonzero(d2 <= dmin + 1e-12)[0]]
        if ties.size == 1:
            return int(ties[0])
        if base is None:
            # pick the base so all ties lie within a half-loop ahead of it
            base = min(ties, key=lambda c: ((ties - c) % n).max())
        return int(max(ties, key=lambda t: (t - base) % n))

    def arc_ahead(self, i: int, j: int) -> float:
        """Arclength from waypoint i forward (wrapping) to waypoint j."""
        ds = self.s[j] - self.s[i]
        return float(ds if j >= i else ds + self.length)

    def point_at_arclength(self, s: float):
        """Linear interpolation of (x, y) at arclength s (wrapping)."""
        s = (s - self.s[0]) % self.length + self.s[0]
        i = int(np.searchsorted(self.s, s, side="right") - 1)
        j = (i + 1) % len(self.waypoints)
        seg = self.arc_ahead(i, j)
        t = 0.0 if seg <= 0 else (s - self.s[i]) / seg
        return self.xy[i] + t * (self.xy[j] - self.xy[i])


def load_racing_line(data: bytes, columns: dict | None = None,
                     delimiter: str = ";", v_max: float = 8.0) -> RacingLine:
    """Parse a delimited waypoint file; '#'-prefixed header rows tolerated.

    Speeds above v_max are clamped with a warning.
    """
    cols = dict(DEFAULT_COLUMNS)
    if columns:
        cols.update(columns)
    text = data.decode("utf-8")
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p for p in line.replace(delimiter, " ").replace(",", " ").split()]
        try:
            values = [float(p) for p in parts]
        except ValueError as exc:
            raise RacingLineError(f"malformed row {lineno}: {line!r}") from exc
        if len(values) <= max(cols.values()):
            raise RacingLineError(
                f"row {lineno} has {len(values)} columns, "
                f"need at least {max(cols.values()) + 1}"
            )
        rows.append(values)
    if not rows:
        raise RacingLineError("no waypoints in racing-line data")

    wps = []
    clamped = 0
    for values in rows:
        v = values[cols["v"]]
        if v > v_max:
            v = v_max
            clamped += 1
        wps.append(Waypoint(
            s=values[cols["s"]],
            x=values[cols["x"]],
            y=values[cols["y"]],
            heading=values[cols["heading"]],
            v=v,
            kappa=values[cols["kappa"]],
        ))
    if clamped:
        warnings.warn(
            f"clamped {clamped} planned speeds above v_max={v_max}",
            stacklevel=2,
        )
    return RacingLine(wps)


def nearest_waypoint(line: RacingLine, position, cursor=None) -> int:
    return line.nearest_index(position, cursor=cursor)


def waypoints_ahead(line: RacingLine, state: VehicleState,
                    horizon: float = 30.0, n_points: int = 20,
                    cursor=None) -> np.ndarray:
    """Fixed-size set of future path points in the vehicle body frame.

    n_points positions sampled evenly by arclength over [0, horizon] ahead
    of the nearest waypoint, translated to the vehicle and rotated by -psi.
    Wraps across the start line.
    """
    if horizon <= 0:
        raise ValueError("horizon must be > 0")
    i = line.nearest_index((state.x, state.y), cursor=cursor)
    s0 = line.s[i]
    offsets = horizon * np.arange(n_points) / max(n_points - 1, 1)
    pts = np.array([line.point_at_arclength(s0 + off) for off in offsets])
    rel = pts - np.array([state.x, state.y])
    c, s = math.cos(-state.psi), math.sin(-state.psi)
    rot = np.array([[c, -s], [s, c]])
    return rel @ rot.T


def random_start(line: RacingLine, grid: OccupancyGrid,
                 rng: np.random.Generator, params: VehicleParams,
                 max_tries: int = 100) -> VehicleState:
    """Running start at a uniformly drawn waypoint (collision-free)."""
    for _ in range(max_tries):
        i = int(rng.integers(len(line)))
        w = line.waypoints[i]
        state = VehicleState(x=w.x, y=w.y, psi=w.heading, v=w.v)
        if not collision_check(grid, state, params):
            return state
    raise StartPlacementError(
        f"no collision-free start found in {max_tries} draws; "
        "track assets are likely inconsistent"
    )


@dataclass
class LapTimer:
    """Counts forward crossings of the start line and times laps.

    The start line is the plane through waypoint 0, normal to its heading,
    gated to gate_half_width laterally so the far side of the track does not
    trigger crossings. A backward crossing arms a debt that the next forward
    crossing cancels, keeping the lap count monotone while back-and-forth
    oscillation nets out.

    With armed=False (running-start protocol) the first forward crossing
    only starts the clock; armed=True counts it as a completed lap, in
    which case lap-time additivity (sum of laps + current partial = total
    elapsed) is exact because step counts are the primary accumulator.
    """

    line: RacingLine
    dt: float = 0.01
    gate_half_width: float = 5.0
    armed: bool = True
    steps: int = 0
    lap_steps: list = field(default_factory=list)
    laps: int = 0
    _debt: int = 0
    _lap_start_step: int = 0

    def _progress(self, x, y):
        w0 = self.line.waypoints[0]
        dx, dy = x - w0.x, y - w0.y
        c, s = math.cos(w0.heading), math.sin(w0.heading)
        return dx * c + dy * s, -dx * s + dy * c   # (along, lateral)

    @property
    def elapsed(self) -> float:
        return self.steps * self.dt

    @property
    def lap_times(self) -> list:
        return [n * self.dt for n in self.lap_steps]

    @property
    def partial_steps(self) -> int:
        return self.steps - self._lap_start_step

    def update(self, prev: VehicleState, nxt: VehicleState, dt: float):
        if abs(dt - self.dt) > 1e-12:
            raise ValueError("LapTimer requires a fixed dt")
        self.steps += 1
        p0, _ = self._progress(prev.x, prev.y)
        p1, lat = self._progress(nxt.x, nxt.y)
        if abs(lat) > self.gate_half_width:
            return self
        if p0 < 0.0 <= p1:
            if self._debt > 0:
                self._debt -= 1
            elif not self.armed:
                self.armed = True
                self._lap_start_step = self.steps
            else:
                self.laps += 1
                self.lap_steps.append(self.steps - self._lap_start_step)
                self._lap_start_step = self.steps
        elif p1 < 0.0 <= p0:
            self._debt += 1
        return self


def update_progress(timer: LapTimer, prev: VehicleState, nxt: VehicleState,
                    dt: float) -> LapTimer:
    return timer.update(prev, nxt, dt)
