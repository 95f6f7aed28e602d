"""Pure pursuit base controller on the racing line."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

from .dynamics import HighLevelAction, VehicleState, wrap_angle
from .params import VehicleParams
from .raceline import RacingLine, Waypoint


@dataclass(frozen=True)
class PurePursuitConfig:
    lookahead: float = 0.82      # m
    wheelbase: float = 0.3302    # m, l_f + l_r
    # Steering-gain length: the geometric derivation is over the wheelbase,
    # but the full vehicle length can be selected for comparison.
    use_vehicle_length: bool = False
    vehicle_length: float = 0.51

    def __post_init__(self):
        if self.lookahead <= 0 or self.wheelbase <= 0:
            raise ValueError("lookahead and wheelbase must be > 0")

    @property
    def gain_length(self) -> float:
        return self.vehicle_length if self.use_vehicle_length else self.wheelbase

    @classmethod
    def from_params(cls, params: VehicleParams, lookahead: float = 0.82,
                    **kw) -> "PurePursuitConfig":
        return cls(lookahead=lookahead, wheelbase=params.wheelbase,
                   vehicle_length=params.l, **kw)


def select_lookahead(line: RacingLine, state: VehicleState, lookahead: float,
                     cursor=None) -> Waypoint:
    """First waypoint at arclength >= lookahead ahead of the nearest one.

    Always strictly forward along the line (never the nearest waypoint
    itself); wraps across the start line. Arclength is measured along the
    line, not Euclidean, for robustness in hairpins.
    """
    n = len(line)
    i = line.nearest_index((state.x, state.y), cursor=cursor)
    for k in range(1, n + 1):
        j = (i + k) % n
        if line.arc_ahead(i, j) >= lookahead:
            return line.waypoints[j]
    return line.waypoints[(i + 1) % n]


def pure_pursuit_steering(state: VehicleState, target: Waypoint,
                          cfg: PurePursuitConfig,
                          delta_max: float = 0.4189,
                          l_r: float = 0.17145) -> float:
    """Steering angle arcing the rear axle through the lookahead point.

    alpha is the angle between the rear-axle-to-target line and the vehicle
    heading; delta = arctan(2 * L * sin(alpha) / lookahead), clamped to
    +-delta_max.
    """
    rx = state.x - l_r * math.cos(state.psi)
    ry = state.y - l_r * math.sin(state.psi)
    dx, dy = target.x - rx, target.y - ry
    if dx * dx + dy * dy < 1e-16:
        warnings.warn("lookahead target coincides with the rear axle",
                      stacklevel=2)
        return 0.0
    alpha = wrap_angle(math.atan2(dy, dx) - state.psi)
    delta = math.atan(2.0 * cfg.gain_length * math.sin(alpha) / cfg.lookahead)
    return max(-delta_max, min(delta_max, delta))


def base_action(line: RacingLine, state: VehicleState,
                cfg: PurePursuitConfig, params: VehicleParams,
                cursor=None) -> HighLevelAction:
    """Deterministic base policy: pure pursuit steering + planned speed of
    the nearest waypoint."""
    i = line.nearest_index((state.x, state.y), cursor=cursor)
    target = select_lookahead(line, state, cfg.lookahead, cursor=cursor)
    steer = pure_pursuit_steering(state, target, cfg,
                                  delta_max=params.delta_max,
                                  l_r=params.l_r)
    return HighLevelAction(steer=steer, speed=float(line.v[i]))
