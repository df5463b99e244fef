"""
Quadrotor rigid-body model.

State vector layout (13): inertial position (3), body-frame velocity (3),
scalar-first unit quaternion (4), body angular rate (3). Gravity acts along
``-e3`` (z up); thrust acts along the body ``+e3`` axis.

These are the readable reference implementations. The per-tick inner loop
used by the engine lives in :mod:`hydrovrb.kernels`, which is checked against
this module in the test suite.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

E3 = np.array([0.0, 0.0, 1.0])
GIMBAL_TOL = 1e-9


@dataclass(frozen=True)
class QuadParams:
    """Physical constants of one quadrotor (defaults: 1.023 kg research quad)."""

    mass: float = 1.023
    arm: float = 0.2223
    k_thrust: float = 1.4865e-7
    k_drag: float = 2.9250e-9
    inertia: tuple[float, float, float] = (0.0095, 0.0095, 0.0186)
    g: float = 9.81
    max_rotor_speed: float = 8000.0
    sensing_radius: float = 10.0
    sensing_half_height: float = 3.0

    def __post_init__(self):
        values = [self.mass, self.arm, self.k_thrust, self.k_drag, self.g,
                  self.max_rotor_speed, self.sensing_radius, self.sensing_half_height, *self.inertia]
        if any(not v > 0 for v in values):
            raise ValueError("all quadrotor constants must be > 0")

    @property
    def inertia_matrix(self) -> np.ndarray:
        return np.diag(self.inertia)

    def rotor_positions(self) -> np.ndarray:
        """Cross layout: rotor k at angle 45 + 90 (k-1) degrees, distance ``arm``."""
        ang = np.deg2rad(45.0 + 90.0 * np.arange(4))
        return np.stack([self.arm * np.cos(ang), self.arm * np.sin(ang), np.zeros(4)], axis=1)


@dataclass
class QuadState:
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    velocity_body: np.ndarray = field(default_factory=lambda: np.zeros(3))
    quaternion: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    rates: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.position, self.velocity_body, self.quaternion, self.rates]).astype(float)

    @classmethod
    def from_vector(cls, x) -> "QuadState":
        x = np.asarray(x, dtype=float)
        return cls(x[0:3].copy(), x[3:6].copy(), x[6:10].copy(), x[10:13].copy())

    def velocity_inertial(self) -> np.ndarray:
        return dcm_from_quaternion(self.quaternion).T @ self.velocity_body


def dcm_from_quaternion(q) -> np.ndarray:
    """Inertial-to-body direction cosine matrix of a scalar-first quaternion."""
    q = np.asarray(q, dtype=float)
    n = float(np.linalg.norm(q))
    if abs(n - 1.0) > 1e-6:
        log.warning("non-unit quaternion (norm %.9f) normalised", n)
        q = q / n
    q0, q1, q2, q3 = q
    return np.array(
        [
            [q0 * q0 + q1 * q1 - q2 * q2 - q3 * q3, 2 * (q1 * q2 + q0 * q3), 2 * (q1 * q3 - q0 * q2)],
            [2 * (q1 * q2 - q0 * q3), q0 * q0 - q1 * q1 + q2 * q2 - q3 * q3, 2 * (q2 * q3 + q0 * q1)],
            [2 * (q1 * q3 + q0 * q2), 2 * (q2 * q3 - q0 * q1), q0 * q0 - q1 * q1 - q2 * q2 + q3 * q3],
        ]
    )


def quaternion_from_euler(phi: float, theta: float, psi: float) -> np.ndarray:
    """Scalar-first quaternion for yaw-pitch-roll (3-2-1) angles."""
    cr, sr = math.cos(phi / 2), math.sin(phi / 2)
    cp, sp = math.cos(theta / 2), math.sin(theta / 2)
    cy, sy = math.cos(psi / 2), math.sin(psi / 2)
    return np.array(
        [
            cr * cp * cy + sr * sp * sy,
            sr * cp * cy - cr * sp * sy,
            cr * sp * cy + sr * cp * sy,
            cr * cp * sy - sr * sp * cy,
        ]
    )


def euler_from_dcm(T) -> tuple[float, float, float]:
    """Roll, pitch, yaw from an inertial-to-body DCM.

    At gimbal lock (``|T[0, 2]| -> 1``) roll is set to zero and the remaining
    rotation is reported as yaw.
    """
    T = np.asarray(T, dtype=float)
    s = -T[0, 2]
    if abs(s) >= 1.0 - GIMBAL_TOL:
        log.warning("gimbal lock in euler_from_dcm; roll set to 0")
        theta = math.copysign(math.pi / 2, s)
        psi = math.atan2(-T[1, 0], T[1, 1])
        return 0.0, theta, psi
    phi = math.atan2(T[1, 2], T[2, 2])
    theta = math.asin(s)
    psi = math.atan2(T[0, 1], T[0, 0])
    return phi, theta, psi


def quat_rate_matrix(w) -> np.ndarray:
    """``B(w)`` with ``qdot = 0.5 B(w) q`` (``q (x) [0, w]``, scalar first)."""
    p, q, r = w
    return np.array(
        [
            [0.0, -p, -q, -r],
            [p, 0.0, r, -q],
            [q, -r, 0.0, p],
            [r, q, -p, 0.0],
        ]
    )


def dynamics_derivative(x, thrust: float, torque, params: QuadParams) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    v, q, w = x[3:6], x[6:10], x[10:13]
    T_ib = dcm_from_quaternion(q / np.linalg.norm(q))
    I = np.asarray(params.inertia)
    v_dot = -np.cross(w, v) + (thrust / params.mass) * E3 - params.g * (T_ib @ E3)
    r_dot = T_ib.T @ v
    w_dot = (np.asarray(torque, dtype=float) - np.cross(w, I * w)) / I
    q_dot = 0.5 * quat_rate_matrix(w) @ q
    return np.concatenate([r_dot, v_dot, q_dot, w_dot])


def rk4_step(x, thrust: float, torque, params: QuadParams, dt: float, normalize: bool = True) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    k1 = dynamics_derivative(x, thrust, torque, params)
    k2 = dynamics_derivative(x + 0.5 * dt * k1, thrust, torque, params)
    k3 = dynamics_derivative(x + 0.5 * dt * k2, thrust, torque, params)
    k4 = dynamics_derivative(x + dt * k3, thrust, torque, params)
    out = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    if normalize:
        out[6:10] /= np.linalg.norm(out[6:10])
    return out


def thrust_attitude_from_force(
    u,
    euler: tuple[float, float, float],
    psi_cmd: float,
    params: QuadParams,
    previous: tuple[float, float] = (0.0, 0.0),
) -> tuple[float, float, float]:
    """Thrust and pitch/roll commands for a mass-normalised inertial command ``u``.

    ``u`` must already contain gravity compensation. A zero command holds the
    ``previous`` (pitch, roll) command with hover thrust.
    """
    u = np.asarray(u, dtype=float)
    norm = float(np.linalg.norm(u))
    if norm == 0.0:
        return params.mass * params.g, previous[0], previous[1]
    phi, theta, psi = euler
    ux, uy, uz = u
    thrust = params.mass * (
        ux * (math.sin(theta) * math.cos(psi) * math.cos(phi) + math.sin(psi) * math.sin(phi))
        + uy * (math.sin(theta) * math.sin(psi) * math.cos(phi) - math.cos(psi) * math.sin(phi))
        + uz * math.cos(theta) * math.cos(phi)
    )
    theta_cmd = math.atan2(ux * math.cos(psi_cmd) + uy * math.sin(psi_cmd), uz)
    arg = (ux * math.sin(psi_cmd) - uy * math.cos(psi_cmd)) / norm
    phi_cmd = math.asin(max(-1.0, min(1.0, arg)))
    return thrust, theta_cmd, phi_cmd


def allocation_matrix(params: QuadParams) -> np.ndarray:
    """Map from squared rotor speeds to ``[T, tau_x, tau_y, tau_z]``."""
    rp = params.rotor_positions()
    kt = np.full(4, params.k_thrust)
    kd = params.k_drag * np.array([1.0, -1.0, 1.0, -1.0])
    return np.vstack([kt, rp[:, 1] * kt, -rp[:, 0] * kt, kd])


@dataclass
class RotorCommand:
    omega_sq: np.ndarray
    saturated: np.ndarray

    @property
    def omega(self) -> np.ndarray:
        return np.sqrt(self.omega_sq)


def allocate_rotors(thrust: float, torque, params: QuadParams, A: np.ndarray | None = None) -> RotorCommand:
    A = allocation_matrix(params) if A is None else A
    if abs(np.linalg.det(A)) < 1e-300:
        raise ValueError("rotor allocation matrix is singular")
    w2 = np.linalg.solve(A, np.concatenate([[thrust], np.asarray(torque, dtype=float)]))
    wmax2 = params.max_rotor_speed ** 2
    sat = (w2 < 0.0) | (w2 > wmax2)
    return RotorCommand(np.clip(w2, 0.0, wmax2), sat)


def wrap_angle(a: float) -> float:
    return (a + math.pi) % (2.0 * math.pi) - math.pi


@dataclass
class PIDGains:
    """Cascaded attitude/rate PID gains (per axis roll, pitch, yaw) and limits."""

    att_kp: tuple = (8.0, 8.0, 8.0)
    att_ki: tuple = (0.1, 0.1, 0.1)
    att_kd: tuple = (0.0, 0.0, 0.0)
    rate_kp: tuple = (2.0, 2.0, 2.0)
    rate_ki: tuple = (0.2, 0.2, 0.2)
    rate_kd: tuple = (0.001, 0.001, 0.001)
    att_int_limit: float = 0.5
    rate_int_limit: float = 0.5
    max_rate: float = 4.0
    torque_limit_xy: float = 1.0
    torque_limit_z: float = 0.1

    def as_array(self) -> np.ndarray:
        return np.concatenate(
            [self.att_kp, self.att_ki, self.att_kd, self.rate_kp, self.rate_ki, self.rate_kd,
             [self.att_int_limit, self.rate_int_limit, self.max_rate,
              self.torque_limit_xy, self.torque_limit_z, 0.0]]
        ).astype(float)


PID_STATE_SIZE = 13


class CascadedPID:
    """Attitude loop producing rate setpoints, rate loop producing torques.

    Integrators are clamped; derivative terms act on the error and are zero on
    the first call.
    """

    def __init__(self, gains: PIDGains | None = None):
        self.gains = gains or PIDGains()
        self.reset()

    def reset(self) -> None:
        self.state = np.zeros(PID_STATE_SIZE)

    def step(self, euler, rates, commands, dt: float) -> np.ndarray:
        if dt <= 0:
            raise ValueError("dt must be > 0")
        g = self.gains
        s = self.state
        phi_c, theta_c, psi_c = commands
        err = np.array([phi_c - euler[0], theta_c - euler[1], wrap_angle(psi_c - euler[2])])
        first = s[12] == 0.0

        s[0:3] = np.clip(s[0:3] + err * dt, -g.att_int_limit, g.att_int_limit)
        d_err = np.zeros(3) if first else (err - s[6:9]) / dt
        rate_cmd = np.asarray(g.att_kp) * err + np.asarray(g.att_ki) * s[0:3] + np.asarray(g.att_kd) * d_err
        rate_cmd = np.clip(rate_cmd, -g.max_rate, g.max_rate)

        rerr = rate_cmd - np.asarray(rates, dtype=float)
        s[3:6] = np.clip(s[3:6] + rerr * dt, -g.rate_int_limit, g.rate_int_limit)
        d_rerr = np.zeros(3) if first else (rerr - s[9:12]) / dt
        tau = np.asarray(g.rate_kp) * rerr + np.asarray(g.rate_ki) * s[3:6] + np.asarray(g.rate_kd) * d_rerr
        lim = np.array([g.torque_limit_xy, g.torque_limit_xy, g.torque_limit_z])
        tau = np.clip(tau, -lim, lim)

        s[6:9] = err
        s[9:12] = rerr
        s[12] = 1.0
        return tau
