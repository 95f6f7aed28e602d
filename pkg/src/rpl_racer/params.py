"""Vehicle parameters for the simulated RC-scale racing car."""

from __future__ import annotations

from dataclasses import dataclass, fields

GRAVITY = 9.81


@dataclass(frozen=True)
class VehicleParams:
    """Physical parameters of the single-track vehicle model.

    Defaults are the measured values for the 1/10-scale RC car.
    """

    h: float = 0.074          # height of COG [m]
    w: float = 0.27           # vehicle width [m]
    l: float = 0.51           # vehicle length [m]
    l_f: float = 0.15875      # COG to front axle [m]
    l_r: float = 0.17145      # COG to rear axle [m]
    m: float = 3.47           # mass [kg]
    I: float = 0.04712        # yaw inertia [kg m^2]
    delta_max: float = 0.4189     # steering angle bound [rad]
    ddelta_max: float = 3.2       # steering velocity bound [rad/s]
    v_switch: float = 7.319       # speed above which full acceleration scales down [m/s]
    v_max: float = 8.0            # maximum velocity [m/s]
    a_max: float = 7.51           # maximum acceleration [m/s^2]
    C_Sf: float = 4.718           # front cornering stiffness [N/m]
    C_Sr: float = 5.4562          # rear cornering stiffness [N/m]
    mu: float = 0.8               # friction coefficient

    def __post_init__(self):
        positive = (
            "h", "w", "l", "l_f", "l_r", "m", "I", "delta_max",
            "ddelta_max", "v_switch", "v_max", "a_max", "C_Sf", "C_Sr",
        )
        for name in positive:
            if getattr(self, name) <= 0:
                raise ValueError(f"vehicle parameter {name} must be > 0")
        if not 0.0 < self.mu <= 1.5:
            raise ValueError("mu must be in (0, 1.5]")
        if self.l_f + self.l_r >= self.l:
            raise ValueError("wheelbase l_f + l_r must be smaller than length l")

    @property
    def wheelbase(self) -> float:
        return self.l_f + self.l_r

    @classmethod
    def from_dict(cls, cfg: dict) -> "VehicleParams":
        """Build parameters from a config section keyed by symbol names.

        Unknown keys are rejected so typos do not silently fall back to
        defaults.
        """
        known = {f.name for f in fields(cls)}
        unknown = set(cfg) - known
        if unknown:
            raise ValueError(f"unknown vehicle parameters: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in cfg.items()})
