"""Slot geometry, optimal agent-to-slot allocation and slot tracking."""
from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment


def yaw_matrix(psi: float) -> np.ndarray:
    """Local-to-inertial rotation for a formation yawed by ``psi`` (columns are local axes)."""
    c, s = math.cos(psi), math.sin(psi)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass
class SlotGeometry:
    """Slot columns ``slots`` (3 x N) around the formation center.

    Slots are re-centred on construction so their centroid is the local
    origin.
    """

    slots: np.ndarray
    attitude: np.ndarray = field(default_factory=lambda: np.eye(3))
    center: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        s = np.asarray(self.slots, dtype=float)
        if s.ndim != 2 or s.shape[0] != 3:
            raise ValueError("slots must be a 3 x N matrix")
        self.slots = s - s.mean(axis=1, keepdims=True)
        self.attitude = np.asarray(self.attitude, dtype=float)
        self.center = np.asarray(self.center, dtype=float).reshape(3)
        check_rotation(self.attitude)

    @property
    def n(self) -> int:
        return self.slots.shape[1]


def check_rotation(T, tol: float = 1e-9) -> None:
    T = np.asarray(T, dtype=float)
    if T.shape != (3, 3):
        raise ValueError("attitude must be 3 x 3")
    if np.max(np.abs(T.T @ T - np.eye(3))) > tol or abs(np.linalg.det(T) - 1.0) > tol:
        raise ValueError("attitude must be a proper rotation matrix")


def cost_matrix(agent_positions_rel_cm, slots) -> np.ndarray:
    agents = np.asarray(agent_positions_rel_cm, dtype=float).reshape(-1, 3)
    s = slots.slots if isinstance(slots, SlotGeometry) else np.asarray(slots, dtype=float)
    if s.shape[1] != len(agents):
        raise ValueError(f"{len(agents)} agents but {s.shape[1]} slots")
    return np.linalg.norm(agents[:, None, :] - s.T[None, :, :], axis=2)


def assignment_cost(cost: np.ndarray, perm) -> float:
    perm = np.asarray(perm, dtype=int)
    return float(cost[np.arange(len(perm)), perm].sum())


def _lap_value(cost: np.ndarray) -> float:
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].sum())


def allocate(agent_positions_rel_cm, slots, tie_tol: float = 1e-9) -> np.ndarray:
    """Slot index for each agent minimising total Euclidean travel.

    Among optimal permutations the lexicographically smallest is returned:
    agents are fixed in index order to the lowest slot that still admits an
    optimal completion (within ``tie_tol`` relative).
    """
    cost = cost_matrix(agent_positions_rel_cm, slots)
    n = cost.shape[0]
    if n == 0:
        raise ValueError("cannot allocate an empty formation")
    best = _lap_value(cost)
    tol = tie_tol * max(1.0, abs(best))

    perm = np.empty(n, dtype=int)
    free_rows = list(range(n))
    free_cols = list(range(n))
    fixed = 0.0
    for i in range(n):
        free_rows.remove(i)
        for j in sorted(free_cols):
            rest_cols = [c for c in free_cols if c != j]
            rest = _lap_value(cost[np.ix_(free_rows, rest_cols)]) if free_rows else 0.0
            if fixed + cost[i, j] + rest <= best + tol:
                perm[i] = j
                fixed += cost[i, j]
                free_cols.remove(j)
                break
        else:  # pragma: no cover - guarded by the tolerance
            raise RuntimeError("tie-breaking lost the optimum")
    return perm


@functools.lru_cache(maxsize=4)
def _permutation_table(n: int) -> np.ndarray:
    """All permutations of ``range(n)`` in lexicographic order, read-only."""
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.intp).reshape(-1, n)
    perms.flags.writeable = False
    return perms


def brute_force_allocate(agent_positions_rel_cm, slots) -> tuple[np.ndarray, float]:
    """Exhaustive search over all N! permutations (test oracle).

    ``argmin`` returns the first minimum, i.e. the lexicographically smallest
    optimal permutation.
    """
    cost = cost_matrix(agent_positions_rel_cm, slots)
    n = cost.shape[0]
    perms = _permutation_table(n)
    totals = cost[np.arange(n)[None, :], perms].sum(axis=1)
    k = int(np.argmin(totals))
    return perms[k].copy(), float(totals[k])


def desired_position(i: int, perm, geometry: SlotGeometry, center=None, attitude=None) -> np.ndarray:
    """Inertial target ``r_cm + T_L^I S[:, perm[i]]``."""
    r_cm = geometry.center if center is None else np.asarray(center, dtype=float)
    T = geometry.attitude if attitude is None else np.asarray(attitude, dtype=float)
    return r_cm + T @ geometry.slots[:, int(perm[i])]


def slot_force(position, velocity, target, target_velocity, kp: float, kd: float) -> np.ndarray:
    """PD pull towards the assigned slot."""
    if kp <= 0 or kd <= 0:
        raise ValueError("slot gains must be > 0")
    return kp * (np.asarray(target, float) - np.asarray(position, float)) + kd * (
        np.asarray(target_velocity, float) - np.asarray(velocity, float)
    )


# --------------------------------------------------------------------------
# formation-center motion


@dataclass
class FormationPath:
    """Straight-line formation center with a yaw profile.

    ``yaw`` is one of ``{"kind": "constant", "value": psi}``,
    ``{"kind": "ramp", "start": t0, "end": t1, "from": psi0, "to": psi1}`` (smooth
    cosine blend) or ``{"kind": "table", "times": [...], "values": [...]}``
    (linear interpolation, rates by central differences).
    """

    start: np.ndarray
    velocity: np.ndarray
    yaw: dict = field(default_factory=lambda: {"kind": "constant", "value": 0.0})
    fd_step: float = 1e-4

    def __post_init__(self):
        self.start = np.asarray(self.start, dtype=float).reshape(3)
        self.velocity = np.asarray(self.velocity, dtype=float).reshape(3)

    def center(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        return self.start + self.velocity * t, self.velocity.copy()

    def heading(self, t: float) -> tuple[float, float]:
        y = self.yaw
        kind = y.get("kind", "constant")
        if kind == "constant":
            return float(y.get("value", 0.0)), 0.0
        if kind == "ramp":
            t0, t1 = float(y["start"]), float(y["end"])
            a, b = float(y["from"]), float(y["to"])
            if t <= t0:
                return a, 0.0
            if t >= t1:
                return b, 0.0
            s = (t - t0) / (t1 - t0)
            blend = 0.5 - 0.5 * math.cos(math.pi * s)
            rate = 0.5 * math.pi * math.sin(math.pi * s) / (t1 - t0)
            return a + (b - a) * blend, (b - a) * rate
        if kind == "table":
            ts, vs = np.asarray(y["times"], float), np.asarray(y["values"], float)
            h = self.fd_step
            val = float(np.interp(t, ts, vs))
            rate = float((np.interp(t + h, ts, vs) - np.interp(t - h, ts, vs)) / (2 * h))
            return val, rate
        raise ValueError(f"unknown yaw profile {kind!r}")

    def slot_targets(self, t: float, slots: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Inertial slot positions and velocities (both N x 3) and the attitude at ``t``."""
        r_cm, v_cm = self.center(t)
        psi, psi_rate = self.heading(t)
        T = yaw_matrix(psi)
        c, s = math.cos(psi), math.sin(psi)
        T_dot = psi_rate * np.array([[-s, -c, 0.0], [c, -s, 0.0], [0.0, 0.0, 0.0]])
        pos = r_cm[None, :] + (T @ slots).T
        vel = v_cm[None, :] + (T_dot @ slots).T
        return pos, vel, T
