"""Single-track vehicle dynamics with tire slip.

State derivatives follow the linear-tire single-track formulation: the yaw
and slip dynamics are driven by the cornering stiffnesses with longitudinal
load transfer through the COG height. That formulation divides by v, so
below V_BLEND_LO the kinematic single-track equations take over, with a
linear interpolation band up to V_BLEND_HI to keep the combined derivative
continuous in v.

Integration is explicit RK4 at the 100 Hz control rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .params import GRAVITY, VehicleParams

V_BLEND_LO = 0.5
V_BLEND_HI = 1.0


@dataclass(frozen=True)
class VehicleState:
    x: float = 0.0          # position [m]
    y: float = 0.0
    delta: float = 0.0      # steering angle [rad]
    v: float = 0.0          # longitudinal speed [m/s]
    psi: float = 0.0        # yaw angle [rad], wrapped to (-pi, pi]
    psi_dot: float = 0.0    # yaw rate [rad/s]
    beta: float = 0.0       # slip angle [rad]

    def as_tuple(self):
        return (self.x, self.y, self.delta, self.v, self.psi,
                self.psi_dot, self.beta)

    @property
    def v_body(self):
        """Body-frame velocity components (longitudinal, lateral)."""
        return (self.v * math.cos(self.beta), self.v * math.sin(self.beta))


@dataclass(frozen=True)
class ModelInput:
    steer_vel: float = 0.0  # steering velocity [rad/s]
    accel: float = 0.0      # longitudinal acceleration [m/s^2]


@dataclass(frozen=True)
class HighLevelAction:
    steer: float = 0.0      # desired steering angle [rad]
    speed: float = 0.0      # desired speed [m/s]


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    return -((-a + math.pi) % (2.0 * math.pi) - math.pi)


def _clamp(x, lo, hi):
    return lo if x < lo else hi if x > hi else x


def _constrained_inputs(delta, v, sv, acc, p: VehicleParams):
    # No steering/accel authority beyond the hard state bounds.
    if (delta <= -p.delta_max and sv < 0) or (delta >= p.delta_max and sv > 0):
        sv = 0.0
    if (v <= 0.0 and acc < 0) or (v >= p.v_max and acc > 0):
        acc = 0.0
    return sv, acc


def _deriv_kinematic(s, sv, acc, p: VehicleParams):
    x, y, delta, v, psi, psi_dot, beta = s
    lwb = p.l_f + p.l_r
    tan_d = math.tan(delta)
    cos_d = math.cos(delta)
    return (
        v * math.cos(psi),
        v * math.sin(psi),
        sv,
        acc,
        v / lwb * tan_d,
        acc / lwb * tan_d + v * sv / (lwb * cos_d * cos_d),
        0.0,
    )


def _deriv_dynamic(s, sv, acc, p: VehicleParams):
    x, y, delta, v, psi, psi_dot, beta = s
    g = GRAVITY
    lwb = p.l_f + p.l_r
    # axle loads shift with longitudinal acceleration through the COG height
    front = p.C_Sf * (g * p.l_r - acc * p.h)
    rear = p.C_Sr * (g * p.l_f + acc * p.h)
    f_psidd = (p.mu * p.m / (p.I * lwb)) * (
        p.l_f * front * delta
        + (p.l_r * rear - p.l_f * front) * beta
        - (p.l_f * p.l_f * front + p.l_r * p.l_r * rear) * psi_dot / v
    )
    f_betad = (p.mu / (v * lwb)) * (
        front * delta
        - (rear + front) * beta
        + (rear * p.l_r - front * p.l_f) * psi_dot / v
    ) - psi_dot
    return (
        v * math.cos(psi + beta),
        v * math.sin(psi + beta),
        sv,
        acc,
        psi_dot,
        f_psidd,
        f_betad,
    )


def state_derivative(s, sv, acc, p: VehicleParams):
    """Blended single-track derivative for the 7-state vector."""
    sv, acc = _constrained_inputs(s[2], s[3], sv, acc, p)
    v = s[3]
    if v < V_BLEND_LO:
        return _deriv_kinematic(s, sv, acc, p)
    if v >= V_BLEND_HI:
        return _deriv_dynamic(s, sv, acc, p)
    w = (v - V_BLEND_LO) / (V_BLEND_HI - V_BLEND_LO)
    fk = _deriv_kinematic(s, sv, acc, p)
    fd = _deriv_dynamic(s, sv, acc, p)
    return tuple((1.0 - w) * a + w * b for a, b in zip(fk, fd))


def step_dynamics(state: VehicleState, inp: ModelInput, dt: float,
                  params: VehicleParams) -> VehicleState:
    """Advance the vehicle one RK4 step of length dt."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    vals = state.as_tuple() + (inp.steer_vel, inp.accel)
    if not all(math.isfinite(v) for v in vals):
        raise ValueError(
            "non-finite vehicle state or model input; "
            "upstream controller is unstable"
        )

    s0 = state.as_tuple()
    sv, acc = inp.steer_vel, inp.accel
    k1 = state_derivative(s0, sv, acc, params)
    s1 = tuple(a + 0.5 * dt * b for a, b in zip(s0, k1))
    k2 = state_derivative(s1, sv, acc, params)
    s2 = tuple(a + 0.5 * dt * b for a, b in zip(s0, k2))
    k3 = state_derivative(s2, sv, acc, params)
    s3 = tuple(a + dt * b for a, b in zip(s0, k3))
    k4 = state_derivative(s3, sv, acc, params)
    out = tuple(
        a + dt / 6.0 * (b + 2.0 * c + 2.0 * d + e)
        for a, b, c, d, e in zip(s0, k1, k2, k3, k4)
    )

    return VehicleState(
        x=out[0],
        y=out[1],
        delta=_clamp(out[2], -params.delta_max, params.delta_max),
        v=_clamp(out[3], 0.0, params.v_max),
        psi=wrap_angle(out[4]),
        psi_dot=out[5],
        beta=out[6],
    )


# Error normalization for the saturating-proportional low-level controller:
# full actuator authority beyond these error magnitudes.
STEER_ERR_FULL = 0.1   # rad
SPEED_ERR_FULL = 1.0   # m/s


def low_level_control(state: VehicleState, action: HighLevelAction,
                      params: VehicleParams) -> ModelInput:
    """Convert a (steer angle, speed) action into bounded model inputs.

    Saturating-proportional in both channels. Above v_switch the available
    forward acceleration scales down by v_switch / v.
    """
    sv = params.ddelta_max * (action.steer - state.delta) / STEER_ERR_FULL
    sv = _clamp(sv, -params.ddelta_max, params.ddelta_max)

    acc = params.a_max * (action.speed - state.v) / SPEED_ERR_FULL
    pos_limit = params.a_max
    if state.v > params.v_switch:
        pos_limit = params.a_max * params.v_switch / state.v
    acc = _clamp(acc, -params.a_max, pos_limit)
    return ModelInput(steer_vel=sv, accel=acc)
