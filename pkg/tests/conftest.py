import numpy as np
import pytest

from rpl_racer.grid import OccupancyGrid
from rpl_racer.params import VehicleParams
from rpl_racer.raceline import RacingLine, Waypoint


@pytest.fixture(scope="session")
def params():
    return VehicleParams()


def square_loop(side=1.0, speed=1.0):
    """Unit-square racing line: 4 waypoints, arclength 0..3, loop length 4."""
    pts = [(0, 0, 0.0), (side, 0, np.pi / 2), (side, side, np.pi),
           (0, side, -np.pi / 2)]
    return RacingLine([
        Waypoint(s=float(i) * side, x=float(x), y=float(y),
                 heading=h, v=speed)
        for i, (x, y, h) in enumerate(pts)
    ])


def straight_line(n=50, spacing=1.0, speed=2.0, y=0.0):
    """Open-ish straight along +x closed by a long return leg; the first
    n waypoints sit on y=const."""
    wps = [Waypoint(s=i * spacing, x=i * spacing, y=y, heading=0.0, v=speed)
           for i in range(n)]
    return RacingLine(wps)


def ring_line(radius=10.0, n=100, speed=2.0):
    ang = 2 * np.pi * np.arange(n) / n
    return RacingLine([
        Waypoint(s=radius * a, x=radius * np.cos(a), y=radius * np.sin(a),
                 heading=float(a + np.pi / 2), v=speed)
        for a in ang
    ])


def empty_room(size_m=10.0, resolution=0.05, wall_cells=2):
    """Closed square room: free interior, occupied border walls."""
    n = int(round(size_m / resolution))
    occ = np.zeros((n, n), dtype=np.uint8)
    occ[:wall_cells, :] = 1
    occ[-wall_cells:, :] = 1
    occ[:, :wall_cells] = 1
    occ[:, -wall_cells:] = 1
    return OccupancyGrid(occupied=occ, resolution=resolution)


@pytest.fixture
def room():
    return empty_room()
