"""
Simulated obstacle sensing: cylindrical range gate, Gaussian position noise
and a constant-velocity Kalman filter per tracked obstacle.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

SIGMA_MEAS = 0.05


@dataclass(frozen=True)
class SensorModel:
    radius: float = 10.0
    half_height: float = 3.0
    sigma: float = SIGMA_MEAS
    accel_psd: float = 0.5
    coast_time: float = 1.0
    velocity_prior_var: float = 10.0


def in_sensing_range(agent_pos, obstacle_pos, radius: float = 10.0, half_height: float = 3.0) -> bool:
    """Cylindrical gate, boundary inclusive."""
    d = np.asarray(obstacle_pos, dtype=float) - np.asarray(agent_pos, dtype=float)
    return math.hypot(d[0], d[1]) <= radius and abs(d[2]) <= half_height


def keyed_rng(seed: int, agent: int, obstacle: int, step: int) -> np.random.Generator:
    """Counter-based stream for one (agent, obstacle, step) draw.

    Independent of the order in which agents are stepped.
    """
    return np.random.Generator(np.random.Philox(key=int(seed), counter=[int(agent), int(obstacle), int(step), 0]))


def noisy_measurement(true_pos, rng: np.random.Generator, sigma: float = SIGMA_MEAS) -> np.ndarray:
    true_pos = np.asarray(true_pos, dtype=float)
    if sigma == 0:
        return true_pos.copy()
    return true_pos + rng.normal(0.0, sigma, size=3)


@dataclass
class Track:
    """Constant-velocity estimate ``[position, velocity]`` with covariance."""

    x: np.ndarray
    P: np.ndarray
    last_seen: float = 0.0
    rejected: int = 0

    @property
    def position(self) -> np.ndarray:
        return self.x[:3]

    @property
    def velocity(self) -> np.ndarray:
        return self.x[3:]


def init_track(z, sigma: float = SIGMA_MEAS, velocity_var: float = 10.0, t: float = 0.0) -> Track:
    z = np.asarray(z, dtype=float)
    x = np.concatenate([z, np.zeros(3)])
    P = np.diag([sigma ** 2] * 3 + [velocity_var] * 3)
    return Track(x, P, last_seen=t)


def two_point_init(z1, z2, dt: float, sigma: float = SIGMA_MEAS, t: float = 0.0) -> Track:
    """Track from two consecutive position fixes ``dt`` apart.

    Velocity is the finite difference; the covariance is the exact one of
    that estimate under independent measurement noise.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    z1 = np.asarray(z1, dtype=float)
    z2 = np.asarray(z2, dtype=float)
    r = sigma ** 2
    x = np.concatenate([z2, (z2 - z1) / dt])
    P = np.kron(np.array([[r, r / dt], [r / dt, 2.0 * r / dt ** 2]]), np.eye(3))
    return Track(x, P, last_seen=t)


def transition(dt: float) -> np.ndarray:
    F = np.eye(6)
    F[0:3, 3:6] = dt * np.eye(3)
    return F


def process_noise(dt: float, accel_psd: float) -> np.ndarray:
    """Discretised white-noise-acceleration covariance."""
    q = np.array([[dt ** 3 / 3.0, dt ** 2 / 2.0], [dt ** 2 / 2.0, dt]]) * accel_psd
    return np.kron(q, np.eye(3))


_H = np.hstack([np.eye(3), np.zeros((3, 3))])


def _symmetrize(P: np.ndarray) -> np.ndarray:
    return 0.5 * (P + P.T)


def kf_predict(track: Track, dt: float, accel_psd: float = 0.5) -> Track:
    if dt <= 0:
        raise ValueError("dt must be > 0")
    F = transition(dt)
    x = F @ track.x
    P = _symmetrize(F @ track.P @ F.T + process_noise(dt, accel_psd))
    return Track(x, P, track.last_seen, track.rejected)


def kf_update(track: Track, z, sigma: float = SIGMA_MEAS, t: float | None = None) -> tuple[Track, bool]:
    """Position-only update. Returns ``(track, accepted)``.

    Non-finite measurements are rejected and leave the track unchanged.
    """
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        log.warning("rejected non-finite measurement %s", z)
        return Track(track.x.copy(), track.P.copy(), track.last_seen, track.rejected + 1), False
    R = sigma ** 2 * np.eye(3)
    P = track.P
    innovation = z - track.x[:3]
    S = P[:3, :3] + R
    K = np.linalg.solve(S, P[:3, :]).T
    x = track.x + K @ innovation
    # Joseph form keeps P symmetric PSD
    IKH = np.eye(6) - K @ _H
    P_new = _symmetrize(IKH @ P @ IKH.T + K @ R @ K.T)
    return Track(x, P_new, track.last_seen if t is None else t, track.rejected), True


def innovation(track: Track, z, sigma: float = SIGMA_MEAS) -> tuple[np.ndarray, np.ndarray]:
    """Innovation and its covariance ``S`` for measurement ``z``."""
    return np.asarray(z, dtype=float) - track.x[:3], track.P[:3, :3] + sigma ** 2 * np.eye(3)
