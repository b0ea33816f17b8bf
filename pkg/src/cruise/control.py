"""Two-loop cascaded PD controller: reference velocity -> (thrust, torque).

Outer loop turns velocity error into a desired acceleration; inner loop maps
it to thrust plus roll/pitch targets (yaw target is always 0) and runs a PD
attitude law. Runs at the physics rate, one call per physics substep.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import ControlCommand, DroneParams, DroneState

PHI_MAX = 0.9  # rad, attitude target clip; keeps inner loop off the gimbal guard


def _vec3(x) -> np.ndarray:
    a = np.asarray(x, dtype=float).reshape(3)
    return a.copy()


@dataclass(frozen=True)
class ControllerGains:
    vel_p: np.ndarray = field(default_factory=lambda: np.full(3, 3.0))
    vel_d: np.ndarray = field(default_factory=lambda: np.full(3, 0.3))
    pos_p: np.ndarray = field(default_factory=lambda: np.full(3, 1.0))
    pos_d: np.ndarray = field(default_factory=lambda: np.full(3, 0.1))
    # attitude gains are inertia-scaled: tau ~ J*(40*err - 12*rate), which puts
    # the attitude loop near critical damping and well above the velocity loop
    att_p: np.ndarray = field(default_factory=lambda: 40.0 * np.array([0.01, 0.01, 0.02]))
    att_d: np.ndarray = field(default_factory=lambda: 12.0 * np.array([0.01, 0.01, 0.02]))

    def __post_init__(self):
        for name in ("vel_p", "vel_d", "pos_p", "pos_d", "att_p", "att_d"):
            object.__setattr__(self, name, _vec3(getattr(self, name)))
        for name in ("vel_p", "vel_d", "pos_p", "pos_d"):
            if np.any(getattr(self, name) < 0):
                raise ValueError(f"{name} must be non-negative")
        if np.any(self.att_p <= 0) or np.any(self.att_d <= 0):
            raise ValueError("attitude gains must be positive")
        flat = tuple(
            float(v)
            for name in ("vel_p", "vel_d", "pos_p", "pos_d", "att_p", "att_d")
            for v in getattr(self, name)
        )
        object.__setattr__(self, "_flat", flat)


@dataclass
class ControllerState:
    prev_velocity_error: np.ndarray = field(default_factory=lambda: np.zeros(3))
    initialized: bool = False

    def to_dict(self) -> dict:
        return {
            "prev_velocity_error": self.prev_velocity_error.tolist(),
            "initialized": self.initialized,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ControllerState":
        return cls(np.asarray(d["prev_velocity_error"], dtype=float), bool(d["initialized"]))


def outer_loop(
    v_ref: np.ndarray,
    state: DroneState,
    ctl: ControllerState,
    gains: ControllerGains,
    dt: float,
) -> tuple[np.ndarray, ControllerState]:
    """PD velocity loop: desired acceleration from velocity error.

    The error derivative is a backward finite difference; it is defined as
    zero on the first call so episodes start without a derivative kick.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    e_v = np.asarray(v_ref, dtype=float) - state.velocity_world
    if ctl.initialized:
        e_v_dot = (e_v - ctl.prev_velocity_error) / dt
    else:
        e_v_dot = np.zeros(3)
    a_des = gains.vel_p * e_v + gains.vel_d * e_v_dot
    return a_des, ControllerState(e_v.copy(), True)


def inner_loop(
    a_des: np.ndarray,
    state: DroneState,
    gains: ControllerGains,
    params: DroneParams,
) -> ControlCommand:
    """Thrust from the vertical channel, attitude PD on roll/pitch targets."""
    g = params.gravity_accel
    a_cmd = gains.pos_p * a_des - gains.pos_d * state.velocity_world
    thrust = params.mass * g + params.mass * a_cmd[2]

    phi_des = float(np.clip(-a_cmd[1] / g, -PHI_MAX, PHI_MAX))
    theta_des = float(np.clip(a_cmd[0] / g, -PHI_MAX, PHI_MAX))
    att_des = np.array([phi_des, theta_des, 0.0])

    torque = gains.att_p * (att_des - state.euler_angles) - gains.att_d * state.body_rates
    return ControlCommand(thrust, torque).clipped(params)


def track_velocity(
    v_ref: np.ndarray,
    state: DroneState,
    ctl_state: ControllerState,
    gains: ControllerGains,
    params: DroneParams,
    dt: float,
) -> tuple[ControlCommand, ControllerState]:
    """The controller entry point the environment uses each physics substep.

    Fused scalar-math version of outer_loop + inner_loop (hot path; the two
    loop functions stay the reference implementations).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    (vp0, vp1, vp2, vd0, vd1, vd2, pp0, pp1, pp2, pd0, pd1, pd2,
     ap0, ap1, ap2, ad0, ad1, ad2) = gains._flat
    v = state.velocity_world
    v0, v1, v2 = float(v[0]), float(v[1]), float(v[2])
    e0 = float(v_ref[0]) - v0
    e1 = float(v_ref[1]) - v1
    e2 = float(v_ref[2]) - v2
    if ctl_state.initialized:
        pe = ctl_state.prev_velocity_error
        ed0 = (e0 - float(pe[0])) / dt
        ed1 = (e1 - float(pe[1])) / dt
        ed2 = (e2 - float(pe[2])) / dt
    else:
        ed0 = ed1 = ed2 = 0.0
    a0 = pp0 * (vp0 * e0 + vd0 * ed0) - pd0 * v0
    a1 = pp1 * (vp1 * e1 + vd1 * ed1) - pd1 * v1
    a2 = pp2 * (vp2 * e2 + vd2 * ed2) - pd2 * v2

    g = params.gravity_accel
    thrust = params.mass * (g + a2)
    phi_des = min(max(-a1 / g, -PHI_MAX), PHI_MAX)
    theta_des = min(max(a0 / g, -PHI_MAX), PHI_MAX)

    eul = state.euler_angles
    rates = state.body_rates
    t0 = ap0 * (phi_des - float(eul[0])) - ad0 * float(rates[0])
    t1 = ap1 * (theta_des - float(eul[1])) - ad1 * float(rates[1])
    t2 = ap2 * (0.0 - float(eul[2])) - ad2 * float(rates[2])

    mt = params.max_torque
    cmd = ControlCommand(
        min(max(thrust, 0.0), params.max_thrust),
        np.array([
            min(max(t0, -mt), mt),
            min(max(t1, -mt), mt),
            min(max(t2, -mt), mt),
        ]),
    )
    return cmd, ControllerState(np.array([e0, e1, e2]), True)
