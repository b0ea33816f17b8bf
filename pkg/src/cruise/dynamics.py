"""6-DOF quadrotor rigid-body dynamics with a fixed-step RK4 integrator.

State is (position, Z-Y-X Euler angles, world velocity, body rates).
Commands are collective thrust along +z_B plus a body torque; there is no
rotor-level allocation, drag, or motor lag.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NonFiniteState, SingularAttitude

GIMBAL_GUARD = 0.1  # rad; pitch must stay below pi/2 - this
DEFAULT_PHYSICS_DT = 0.01  # s


def _default_inertia() -> np.ndarray:
    return np.diag([0.01, 0.01, 0.02])


@dataclass(frozen=True)
class DroneParams:
    mass: float = 1.0
    inertia: np.ndarray = field(default_factory=_default_inertia)
    gravity_accel: float = 9.81
    arm_length: float = 0.15
    max_thrust: float | None = None  # defaults to 4*m*g
    max_torque: float = 0.2

    def __post_init__(self):
        J = np.asarray(self.inertia, dtype=float).reshape(3, 3)
        object.__setattr__(self, "inertia", J)
        if self.mass <= 0:
            raise ValueError("mass must be positive")
        if self.gravity_accel <= 0:
            raise ValueError("gravity_accel must be positive")
        if not np.allclose(J, J.T, atol=1e-12):
            raise ValueError("inertia must be symmetric")
        if np.any(np.linalg.eigvalsh(J) <= 0):
            raise ValueError("inertia must be positive-definite")
        if self.max_thrust is None:
            object.__setattr__(self, "max_thrust", 4.0 * self.mass * self.gravity_accel)
        if self.max_thrust <= self.mass * self.gravity_accel:
            raise ValueError("max_thrust must exceed hover thrust m*g")
        object.__setattr__(self, "_inertia_inv", np.linalg.inv(J))
        # flat scalar copies keep the integrator hot path off numpy indexing
        object.__setattr__(self, "_j_flat", tuple(float(v) for v in J.ravel()))
        object.__setattr__(self, "_ji_flat", tuple(float(v) for v in self._inertia_inv.ravel()))

    @property
    def inertia_inv(self) -> np.ndarray:
        return self._inertia_inv


@dataclass
class DroneState:
    position_world: np.ndarray
    euler_angles: np.ndarray  # [roll, pitch, yaw]
    velocity_world: np.ndarray
    body_rates: np.ndarray  # [p, q, r]

    @classmethod
    def zero(cls) -> "DroneState":
        return cls(np.zeros(3), np.zeros(3), np.zeros(3), np.zeros(3))

    @classmethod
    def from_vector(cls, x: np.ndarray) -> "DroneState":
        x = np.asarray(x, dtype=float)
        return cls(x[0:3].copy(), x[3:6].copy(), x[6:9].copy(), x[9:12].copy())

    def as_vector(self) -> np.ndarray:
        return np.concatenate(
            [self.position_world, self.euler_angles, self.velocity_world, self.body_rates]
        )

    def copy(self) -> "DroneState":
        return DroneState(
            self.position_world.copy(),
            self.euler_angles.copy(),
            self.velocity_world.copy(),
            self.body_rates.copy(),
        )


@dataclass
class ControlCommand:
    collective_thrust: float
    body_torque: np.ndarray

    def clipped(self, params: DroneParams) -> "ControlCommand":
        T = min(max(self.collective_thrust, 0.0), params.max_thrust)
        tau = np.clip(self.body_torque, -params.max_torque, params.max_torque)
        return ControlCommand(T, tau)


def rotation_world_from_body(euler: np.ndarray) -> np.ndarray:
    """Body-to-world rotation for Z-Y-X (yaw-pitch-roll) Euler angles."""
    phi, theta, psi = float(euler[0]), float(euler[1]), float(euler[2])
    cphi, sphi = math.cos(phi), math.sin(phi)
    cth, sth = math.cos(theta), math.sin(theta)
    cpsi, spsi = math.cos(psi), math.sin(psi)
    return np.array(
        [
            [cpsi * cth, cpsi * sth * sphi - spsi * cphi, cpsi * sth * cphi + spsi * sphi],
            [spsi * cth, spsi * sth * sphi + cpsi * cphi, spsi * sth * cphi - cpsi * sphi],
            [-sth, cth * sphi, cth * cphi],
        ]
    )


def euler_rate_map(euler: np.ndarray) -> np.ndarray:
    """Matrix mapping body rates [p,q,r] to Euler-angle rates (Z-Y-X).

    Raises SingularAttitude within GIMBAL_GUARD of the pitch singularity.
    """
    phi, theta = float(euler[0]), float(euler[1])
    if abs(theta) >= math.pi / 2 - GIMBAL_GUARD:
        raise SingularAttitude(f"pitch {theta:.3f} rad too close to +-pi/2")
    cphi, sphi = math.cos(phi), math.sin(phi)
    tth = math.tan(theta)
    cth = math.cos(theta)
    return np.array(
        [
            [1.0, sphi * tth, cphi * tth],
            [0.0, cphi, -sphi],
            [0.0, sphi / cth, cphi / cth],
        ]
    )


def _deriv(x, T, tau, params: DroneParams):
    """Scalar-math state derivative; x is a 12-sequence. Hot path."""
    phi, theta, psi = x[3], x[4], x[5]
    if abs(theta) >= math.pi / 2 - GIMBAL_GUARD:
        raise SingularAttitude(f"pitch {theta:.3f} rad too close to +-pi/2")
    p, q, r = x[9], x[10], x[11]
    cphi, sphi = math.cos(phi), math.sin(phi)
    cth, sth = math.cos(theta), math.sin(theta)
    cpsi, spsi = math.cos(psi), math.sin(psi)
    tth = sth / cth

    # Euler kinematics
    phid = p + sphi * tth * q + cphi * tth * r
    thd = cphi * q - sphi * r
    psid = (sphi * q + cphi * r) / cth

    # linear: gravity + thrust along body z
    Tm = T / params.mass
    g = params.gravity_accel
    vxd = (cpsi * sth * cphi + spsi * sphi) * Tm
    vyd = (spsi * sth * cphi - cpsi * sphi) * Tm
    vzd = cth * cphi * Tm - g

    # angular: J^-1 (tau - w x Jw)
    j00, j01, j02, j10, j11, j12, j20, j21, j22 = params._j_flat
    hx = j00 * p + j01 * q + j02 * r
    hy = j10 * p + j11 * q + j12 * r
    hz = j20 * p + j21 * q + j22 * r
    mx = tau[0] - (q * hz - r * hy)
    my = tau[1] - (r * hx - p * hz)
    mz = tau[2] - (p * hy - q * hx)
    i00, i01, i02, i10, i11, i12, i20, i21, i22 = params._ji_flat
    pd = i00 * mx + i01 * my + i02 * mz
    qd = i10 * mx + i11 * my + i12 * mz
    rd = i20 * mx + i21 * my + i22 * mz

    return (x[6], x[7], x[8], phid, thd, psid, vxd, vyd, vzd, pd, qd, rd)


def state_derivative(
    state: DroneState, cmd: ControlCommand, params: DroneParams
) -> DroneState:
    """Time derivative of each state block, per-second units."""
    d = _deriv(state.as_vector(), cmd.collective_thrust, cmd.body_torque, params)
    return DroneState.from_vector(np.array(d))


def step(
    state: DroneState, cmd: ControlCommand, params: DroneParams, dt: float
) -> DroneState:
    """Advance one fixed RK4 step with the command zero-order-held."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    T = min(max(float(cmd.collective_thrust), 0.0), params.max_thrust)
    mt = params.max_torque
    tau = tuple(min(max(float(v), -mt), mt) for v in cmd.body_torque)
    p_, e_, v_, w_ = (
        state.position_world,
        state.euler_angles,
        state.velocity_world,
        state.body_rates,
    )
    x = (
        float(p_[0]), float(p_[1]), float(p_[2]),
        float(e_[0]), float(e_[1]), float(e_[2]),
        float(v_[0]), float(v_[1]), float(v_[2]),
        float(w_[0]), float(w_[1]), float(w_[2]),
    )

    k1 = _deriv(x, T, tau, params)
    x2 = tuple(x[i] + 0.5 * dt * k1[i] for i in range(12))
    k2 = _deriv(x2, T, tau, params)
    x3 = tuple(x[i] + 0.5 * dt * k2[i] for i in range(12))
    k3 = _deriv(x3, T, tau, params)
    x4 = tuple(x[i] + dt * k3[i] for i in range(12))
    k4 = _deriv(x4, T, tau, params)

    sixth = dt / 6.0
    out = [
        x[i] + sixth * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) for i in range(12)
    ]
    for v in out:
        if not math.isfinite(v):
            raise NonFiniteState("non-finite state after integration step")
    return DroneState(
        np.array(out[0:3]), np.array(out[3:6]), np.array(out[6:9]), np.array(out[9:12])
    )
