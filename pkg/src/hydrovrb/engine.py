"""
Time-stepping loop for the synthesised controller.

Each outer tick reads one snapshot of the world and, per agent,

* senses obstacles inside the cylindrical gate and updates one Kalman track
  per (agent, obstacle) pair,
* builds the guidance velocity ``v_g`` towards its slot (or reference point)
  and deflects it around every in-range obstacle estimate, giving ``v_h``,
* forms ``f_cmd = f_h + f_s + f_g + f_c`` (mass normalised) where the
  constraint term is one joint solve for the whole formation,
* maps ``f_cmd`` to thrust and attitude commands and runs the inner
  PID/allocation/RK4 loop in the compiled kernel.

``f_h = K_h (v_h - v_g)`` vanishes exactly when no obstacle is in range.
"""
from __future__ import annotations

import csv
import io
import logging
import math
import os
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .assignment import FormationPath, SlotGeometry, allocate, yaw_matrix
from .config import Timing, slot_edges, slot_matrix
from .flowfield import FlowBody, superpose_detailed
from .formation import ConstraintSet, constraint_force_detailed, constraint_residuals
from .sensing import (
    Track,
    in_sensing_range,
    init_track,
    keyed_rng,
    kf_predict,
    kf_update,
    noisy_measurement,
    two_point_init,
)
from .vehicle import (
    E3,
    PIDGains,
    QuadParams,
    allocation_matrix,
    dcm_from_quaternion,
    euler_from_dcm,
    quaternion_from_euler,
    thrust_attitude_from_force,
)

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
SETTLE_TOL = 0.05


class SimulationAbort(RuntimeError):
    """Non-finite state; ``dump`` holds the last good world as plain data."""

    def __init__(self, message: str, dump: dict):
        super().__init__(message)
        self.dump = dump


# --------------------------------------------------------------------------
# references


def figure_eight_reference(t: float, spec: dict) -> tuple[np.ndarray, np.ndarray]:
    """Gerono lemniscate ``x = A sin(wt)``, ``y = B sin(2wt) / 2`` at altitude ``h``."""
    pos, vel, _ = figure_eight_state(t, spec)
    return pos, vel


def figure_eight_state(t: float, spec: dict) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Position, velocity and acceleration on the figure eight."""
    T = float(spec["period"])
    if T <= 0:
        raise ValueError("figure-eight period must be > 0")
    A, B, h = float(spec["A"]), float(spec["B"]), float(spec["altitude"])
    cx, cy = spec.get("center", (0.0, 0.0))
    w = 2.0 * math.pi / T
    s1, c1 = math.sin(w * t), math.cos(w * t)
    s2, c2 = math.sin(2 * w * t), math.cos(2 * w * t)
    pos = np.array([cx + A * s1, cy + 0.5 * B * s2, h])
    vel = np.array([A * w * c1, B * w * c2, 0.0])
    acc = np.array([-A * w * w * s1, -2.0 * B * w * w * s2, 0.0])
    return pos, vel, acc


def guidance_velocity(target, target_vel, position, kp: float, kd: float, vmax: float) -> np.ndarray:
    """Velocity the PD slot law settles onto: ``v_d + (kp/kd)(r_d - r)``, norm-limited."""
    v = np.asarray(target_vel, float) + (kp / kd) * (np.asarray(target, float) - np.asarray(position, float))
    n = float(np.linalg.norm(v))
    if n > vmax:
        v = v * (vmax / n)
    return v


def limit_tilt(u: np.ndarray, g: float, max_tilt: float) -> np.ndarray:
    """Keep the vertical acceleration command in ``[0.2 g, 2 g]`` and the
    horizontal part inside the tilt cone."""
    u = np.array(u, dtype=float)
    u[2] = min(max(u[2], 0.2 * g), 2.0 * g)
    h = math.hypot(u[0], u[1])
    hmax = u[2] * math.tan(max_tilt)
    if h > hmax:
        u[0:2] *= hmax / h
    return u


# --------------------------------------------------------------------------
# world


@dataclass
class TrackSlot:
    track: Track
    t: float
    n_meas: int
    last_z: np.ndarray


@dataclass
class World:
    tick: int
    t: float
    states: np.ndarray
    pid: np.ndarray
    rotor: np.ndarray
    tracks: list = field(default_factory=list)

    def dump(self) -> dict:
        return {
            "tick": self.tick,
            "t": self.t,
            "states": self.states.tolist(),
            "pid": self.pid.tolist(),
            "rotor": self.rotor.tolist(),
        }


@dataclass
class StepRecord:
    clearance: np.ndarray
    residuals: np.ndarray
    pos_err: np.ndarray
    vel_err: np.ndarray
    in_range: np.ndarray
    inside_hits: np.ndarray
    saturated: np.ndarray
    fc_residual: float
    psi_cmd: float
    psi_fit: float


def _fit_yaw(points: np.ndarray, slots: np.ndarray) -> float:
    """Yaw of the best-fit rotation taking slot geometry onto ``points`` (Kabsch)."""
    P = points - points.mean(axis=0)
    Q = slots.T - slots.T.mean(axis=0)
    U, _, Vt = np.linalg.svd(Q.T @ P)
    d = np.sign(np.linalg.det(U @ Vt))
    R = (U @ np.diag([1.0, 1.0, d]) @ Vt).T
    return math.atan2(R[1, 0], R[0, 0])


class Simulation:
    """One scenario run over a resolved config dict."""

    def __init__(self, cfg: dict, backend=None):
        self.cfg = cfg
        self.kern = backend or kernels
        if self.kern is kernels:
            self.backend_name = kernels.BACKEND
        else:
            self.backend_name = "python" if self.kern.__name__.endswith("_core_py") else "compiled"
        self.timing = Timing(**cfg["timing"])
        self.mode = cfg["mode"]
        v = cfg["vehicle"]
        self.params = QuadParams(
            mass=v["mass"], arm=v["arm"], k_thrust=v["k_thrust"], k_drag=v["k_drag"],
            inertia=tuple(v["inertia"]), g=v["g"], max_rotor_speed=v["max_rotor_speed"],
            sensing_radius=cfg["sensing"]["radius"], sensing_half_height=cfg["sensing"]["half_height"],
        )
        self.gains = PIDGains(**{k: (tuple(x) if isinstance(x, list) else x) for k, x in v["pid"].items()})
        self.max_tilt = math.radians(v["max_tilt_deg"])
        p = self.params
        A = allocation_matrix(p)
        if abs(np.linalg.det(A)) < 1e-300:
            raise ValueError("rotor allocation matrix is singular")
        self._amat = np.ascontiguousarray(A.reshape(-1))
        self._ainv = np.ascontiguousarray(np.linalg.inv(A).reshape(-1))
        self._kparams = np.array([p.mass, p.g, *p.inertia, p.max_rotor_speed])
        self._kgains = np.ascontiguousarray(self.gains.as_array())

        self.n = cfg["agents"]["count"]
        self.obstacles = cfg["obstacles"]
        self._obs_r0 = np.array([o["position"] for o in self.obstacles], dtype=float).reshape(-1, 3)
        self._obs_v = np.array([o["velocity"] for o in self.obstacles], dtype=float).reshape(-1, 3)
        av = cfg["avoidance"]
        self._bodies_proto = [
            dict(kind=o.get("kind", "doublet"), radius=o.get("R_d", av["R_d"]),
                 buffer=o.get("epsilon", av["epsilon"]), separation=o.get("separation", 1.0),
                 strength=o.get("strength", 1.0))
            for o in self.obstacles
        ]
        self._fast_flow = av["superposition"] == "sequential" and all(
            b["kind"] == "doublet" for b in self._bodies_proto
        )

        if self.mode == "formation":
            f = cfg["formation"]
            self.geometry = SlotGeometry(slot_matrix(cfg))
            self.slot_edges = slot_edges(cfg) - 1
            self.path = FormationPath(f["path"]["start"], f["path"]["velocity"], f["yaw"])
            self.kp, self.kd = f["k_p"], f["k_d"]
        else:
            ref = cfg["reference"]
            self.kp, self.kd = ref["k_p"], ref["k_d"]
        self.perm = None
        self.cset = None
        self.world = self._initial_world()
        if self.mode == "formation":
            self._assign(self.world)

    # ---------------------------------------------------------------- setup

    def _reference(self, t: float):
        """Per-agent target positions, velocities, feed-forward accelerations, yaw."""
        if self.mode == "formation":
            pos, vel, _ = self.path.slot_targets(t, self.geometry.slots)
            psi, _ = self.path.heading(t)
            if self.perm is not None:
                pos, vel = pos[self.perm], vel[self.perm]
            return pos, vel, np.zeros_like(pos), psi
        ref = self.cfg["reference"]
        if ref["type"] == "hover":
            p = np.array(ref["position"], dtype=float)
            return p[None, :], np.zeros((1, 3)), np.zeros((1, 3)), 0.0
        p, v, a = figure_eight_state(t, ref)
        return p[None, :], v[None, :], a[None, :], 0.0

    def _initial_world(self) -> World:
        ag = self.cfg["agents"]
        pos, vel, _, psi = self._reference(0.0)
        if ag["initial_positions"] is not None:
            pos = np.array(ag["initial_positions"], dtype=float)
            vel = np.zeros_like(pos)
        if ag["initial_velocities"] is not None:
            vel = np.array(ag["initial_velocities"], dtype=float)
        q = quaternion_from_euler(0.0, 0.0, psi)
        T = dcm_from_quaternion(q)
        states = np.zeros((self.n, 13))
        for i in range(self.n):
            states[i, 0:3] = pos[i]
            states[i, 3:6] = T @ vel[i]
            states[i, 6:10] = q
        tracks = [dict() for _ in range(self.n)]
        rotor = np.zeros((self.n, 8))
        return World(0, 0.0, states, np.zeros((self.n, 13)), rotor, tracks)

    def _assign(self, world: World) -> None:
        """Slot allocation from the current positions; resets the constraint integral."""
        r_cm, _ = self.path.center(world.t)
        psi, _ = self.path.heading(world.t)
        slots_inertial = yaw_matrix(psi) @ self.geometry.slots
        rel = world.states[:, 0:3] - r_cm
        self.perm = allocate(rel, slots_inertial)
        inv = np.argsort(self.perm)
        agent_edges = np.sort(inv[self.slot_edges], axis=1)
        g = self.cfg["formation"]["gains"]
        beta = g["alpha"] if g["beta"] is None else g["beta"]
        self.cset = ConstraintSet.from_geometry(
            self.geometry.slots[:, self.perm].T, agent_edges, alpha=g["alpha"], beta=beta,
            gamma=g["gamma"], integral_limit=self.cfg["formation"]["integral_limit"],
        )
        log.info("slot allocation %s", self.perm.tolist())

    # ---------------------------------------------------------------- sensing

    def obstacle_truth(self, tick: int) -> tuple[np.ndarray, np.ndarray]:
        t = tick * self.timing.dt_outer
        return self._obs_r0 + self._obs_v * t, self._obs_v

    def _sense(self, i: int, world: World, truth: np.ndarray) -> list[tuple[int, np.ndarray, np.ndarray]]:
        """Update agent ``i``'s tracks; return ``(obstacle, position, velocity)`` estimates in range."""
        s = self.cfg["sensing"]
        sigma = s["sigma_meas"] if s["noise"] else 0.0
        t = world.t
        out = []
        pos = world.states[i, 0:3]
        tracks = world.tracks[i]
        for o in range(len(truth)):
            if not in_sensing_range(pos, truth[o], s["radius"], s["half_height"]):
                slot = tracks.get(o)
                if slot is not None and t - slot.track.last_seen > s["coast_time"] + 1e-12:
                    del tracks[o]
                continue
            if not s["filter"]:
                out.append((o, truth[o].copy(), self._obs_v[o].copy()))
                continue
            z = noisy_measurement(truth[o], keyed_rng(self.cfg["seed"], i, o, world.tick), sigma)
            r = max(s["sigma_meas"], 1e-6)
            slot = tracks.get(o)
            if slot is None:
                slot = TrackSlot(init_track(z, r, t=t), t, 1, z)
            elif slot.n_meas == 1 and t > slot.t:
                slot = TrackSlot(two_point_init(slot.last_z, z, t - slot.t, r, t=t), t, 2, z)
            else:
                tr = slot.track
                if t > slot.t:
                    tr = kf_predict(tr, t - slot.t, s["q_a"])
                tr, ok = kf_update(tr, z, r, t)
                slot = TrackSlot(tr, t, slot.n_meas + int(ok), z)
            tracks[o] = slot
            out.append((o, slot.track.position.copy(), slot.track.velocity.copy()))
        return out

    # ---------------------------------------------------------------- control

    def _deflect(self, pos: np.ndarray, v_g: np.ndarray, seen) -> tuple[np.ndarray, int]:
        if self._fast_flow:
            order = sorted(range(len(seen)), key=lambda k: (float(np.linalg.norm(pos - seen[k][1])), seen[k][0]))
            v = v_g.copy()
            out = np.zeros(3)
            hits = 0
            for k in order:
                o, c, vo = seen[k]
                b = self._bodies_proto[o]
                hits += self.kern.doublet_induced(pos, v, c, vo, b["radius"] + b["buffer"], out)
                v = out.copy()
            return v, hits
        bodies = [FlowBody(c, vo, **self._bodies_proto[o]) for o, c, vo in seen]
        return superpose_detailed(
            pos, None, bodies, v_g, mode=self.cfg["avoidance"]["superposition"], project_inside=True
        )

    def command_force(self, i: int, world: World, seen, target, target_vel, target_acc, fc_i=None):
        """Mass-normalised ``f_cmd`` for agent ``i`` and the number of inside-body projections."""
        av = self.cfg["avoidance"]
        x = world.states[i]
        T = dcm_from_quaternion(x[6:10])
        pos, vel = x[0:3], T.T @ x[3:6]
        f_s = self.kp * (target - pos) + self.kd * (target_vel - vel) + target_acc
        hits = 0
        f_h = np.zeros(3)
        if av["enabled"] and seen:
            v_g = guidance_velocity(target, target_vel, pos, self.kp, self.kd, av["max_guidance_speed"])
            v_h, hits = self._deflect(pos, v_g, seen)
            f_h = av["K_h"] * (v_h - v_g)
        f_g = self.params.g * E3
        u = f_h + f_s + f_g
        if fc_i is not None:
            u = u + fc_i
        return u, f_h, f_s, int(hits)

    # ---------------------------------------------------------------- stepping

    def step(self) -> StepRecord:
        w = self.world
        tm = self.timing
        n = self.n
        m = self.params.mass
        truth, _ = self.obstacle_truth(w.tick)
        target, target_vel, target_acc, psi_cmd = self._reference(w.t)

        seen = [self._sense(i, w, truth) for i in range(n)]

        pos = w.states[:, 0:3].copy()
        vel = np.array([dcm_from_quaternion(w.states[i, 6:10]).T @ w.states[i, 3:6] for i in range(n)])
        parts = [self.command_force(i, w, seen[i], target[i], target_vel[i], target_acc[i]) for i in range(n)]

        fc = np.zeros((n, 3))
        fc_res = 0.0
        if self.mode == "formation":
            applied = m * np.array([p[1] + p[2] for p in parts])
            res = constraint_force_detailed(pos, vel, m, applied, self.cset)
            fc = res.force.reshape(n, 3) / m
            fc_res = res.residual / max(res.rhs_norm, 1e-300)
            self.cset.accumulate(constraint_residuals(pos, self.cset), tm.dt_outer)

        sat = np.zeros(n, dtype=int)
        att = np.zeros(3)
        for i in range(n):
            u = limit_tilt(parts[i][0] + fc[i], self.params.g, self.max_tilt)
            T = dcm_from_quaternion(w.states[i, 6:10])
            euler = euler_from_dcm(T)
            _, theta_c, phi_c = thrust_attitude_from_force(u, euler, psi_cmd, self.params)
            att[0], att[1], att[2] = phi_c, theta_c, psi_cmd
            state = np.ascontiguousarray(w.states[i])
            pid = np.ascontiguousarray(w.pid[i])
            out = np.zeros(8)
            sat[i] = self.kern.quad_advance(
                state, pid, np.ascontiguousarray(u), att, self._kparams, self._kgains,
                self._ainv, self._amat, tm.dt_inner, tm.substeps, out,
            )
            w.states[i] = state
            w.pid[i] = pid
            w.rotor[i] = out

        w.tick += 1
        w.t = w.tick * tm.dt_outer
        if not np.all(np.isfinite(w.states)):
            raise SimulationAbort(f"non-finite vehicle state at t={w.t:.6g}", {})
        return self._record(w, seen, parts, sat, fc_res, psi_cmd)

    def _record(self, w: World, seen, parts, sat, fc_res, psi_cmd) -> StepRecord:
        n = self.n
        truth, _ = self.obstacle_truth(w.tick)
        pos = w.states[:, 0:3]
        if len(truth):
            d = np.linalg.norm(pos[:, None, :] - truth[None, :, :], axis=2)
            clearance = d.min(axis=1)
        else:
            clearance = np.full(n, np.inf)
        target, target_vel, _, psi_now = self._reference(w.t)
        vel = np.array([dcm_from_quaternion(w.states[i, 6:10]).T @ w.states[i, 3:6] for i in range(n)])
        if self.mode == "formation":
            residuals = constraint_residuals(pos, self.cset)
            psi_fit = _fit_yaw(pos, self.geometry.slots[:, self.perm])
        else:
            residuals = np.zeros(0)
            psi_fit = math.nan
        return StepRecord(
            clearance=clearance,
            residuals=residuals,
            pos_err=np.linalg.norm(target - pos, axis=1),
            vel_err=np.linalg.norm(target_vel - vel, axis=1),
            in_range=np.array([len(s) for s in seen]),
            inside_hits=np.array([p[3] for p in parts]),
            saturated=sat,
            fc_residual=fc_res,
            psi_cmd=psi_now,
            psi_fit=psi_fit,
        )

    def run(self, ticks: int | None = None) -> "RunResult":
        ticks = self.timing.ticks if ticks is None else int(ticks)
        t0 = time.perf_counter()
        records = []
        traj = []
        interval = self.cfg["formation"]["reallocate_interval"] if self.mode == "formation" else 0.0
        every = int(round(interval / self.timing.dt_outer)) if interval > 0 else 0
        for _ in range(ticks):
            if every and self.world.tick > 0 and self.world.tick % every == 0:
                self._assign(self.world)
            snapshot = self.world.dump()
            try:
                rec = self.step()
            except SimulationAbort as exc:
                raise SimulationAbort(str(exc), snapshot) from None
            records.append(rec)
            traj.append(np.hstack([self.world.states, self.world.rotor]))
        wall = time.perf_counter() - t0
        return RunResult(self, records, traj, wall)


# --------------------------------------------------------------------------
# results


@dataclass
class RunResult:
    sim: Simulation
    records: list
    trajectory: list
    wall_time: float

    @property
    def times(self) -> np.ndarray:
        dt = self.sim.timing.dt_outer
        return np.arange(1, len(self.records) + 1) * dt

    def residual_history(self) -> np.ndarray:
        m = self.sim.cset.m if self.sim.cset is not None else 0
        if not self.records:
            return np.zeros((0, m))
        return np.array([r.residuals for r in self.records])

    def clearance_history(self) -> np.ndarray:
        if not self.records:
            return np.zeros((0, self.sim.n))
        return np.array([r.clearance for r in self.records])

    def in_range_history(self) -> np.ndarray:
        if not self.records:
            return np.zeros((0, self.sim.n), dtype=int)
        return np.array([r.in_range for r in self.records])

    def avoidance_mask(self) -> np.ndarray:
        """Per tick and agent: an obstacle is in range now or was within the margin."""
        inr = self.in_range_history() > 0
        if not len(inr):
            return inr
        margin = int(round(self.sim.cfg["metrics"]["avoidance_margin"] / self.sim.timing.dt_outer))
        mask = inr.copy()
        last = np.full(inr.shape[1], -(10 ** 9))
        for k in range(len(inr)):
            last[inr[k]] = k
            mask[k] |= (k - last) <= margin
        return mask

    def avoidance_windows(self) -> list[tuple[float, float]]:
        """Intervals during which any agent had an obstacle in range."""
        inr = (self.in_range_history() > 0).any(axis=1) if self.records else np.zeros(0, bool)
        t = self.times
        out = []
        start = None
        for k, on in enumerate(inr):
            if on and start is None:
                start = t[k]
            if not on and start is not None:
                out.append((float(start), float(t[k - 1])))
                start = None
        if start is not None:
            out.append((float(start), float(t[-1])))
        return out

    def summary(self) -> dict:
        sim = self.sim
        cfg = sim.cfg
        t = self.times
        clr = self.clearance_history()
        pos_err = np.array([r.pos_err for r in self.records]) if self.records else np.zeros((0, sim.n))
        mask = self.avoidance_mask()
        settle = cfg["metrics"]["settle_time"]
        res = np.abs(self.residual_history())
        out = {
            "format_version": FORMAT_VERSION,
            "name": cfg["name"],
            "seed": cfg["seed"],
            "backend": sim.backend_name,
            "ticks": len(self.records),
            "final_time": float(t[-1]) if len(t) else 0.0,
        }
        finite = np.isfinite(clr).any() if clr.size else False
        out["min_clearance_per_agent"] = clr.min(axis=0).tolist() if finite else None
        out["min_clearance"] = float(clr.min()) if finite else None
        out["rms_reference_error"] = float(np.sqrt(np.mean(pos_err ** 2))) if pos_err.size else None
        away = pos_err[~mask] if pos_err.size else pos_err
        out["rms_reference_error_outside_avoidance"] = float(np.sqrt(np.mean(away ** 2))) if away.size else None
        if res.shape[1] if res.ndim == 2 else 0:
            after = res[t >= settle]
            out["max_residual_after_settling"] = float(after.max()) if after.size else None
            quiet = ~mask.any(axis=1)
            q = res[(t >= settle) & quiet]
            out["max_residual_cruise"] = float(q.max()) if q.size else None
            a = res[mask.any(axis=1)]
            out["max_residual_avoidance"] = float(a.max()) if a.size else None
            out["resettle_time"] = self._resettle_time(res)
            out["max_constraint_solve_residual"] = float(max(r.fc_residual for r in self.records))
            out["allocation"] = sim.perm.tolist()
        windows = self.avoidance_windows()
        out["avoidance_windows"] = [list(w) for w in windows]
        out["saturated_substeps"] = int(sum(int(r.saturated.sum()) for r in self.records))
        out["inside_body_projections"] = int(sum(int(r.inside_hits.sum()) for r in self.records))
        out["wall_time_s"] = self.wall_time
        out["config"] = cfg
        return out

    def _resettle_time(self, res: np.ndarray):
        """Seconds from the last tick with any obstacle in range until every
        residual stays below the settling tolerance."""
        inr = (self.in_range_history() > 0).any(axis=1)
        if not inr.any():
            return None
        last = int(np.nonzero(inr)[0][-1])
        bad = np.nonzero((res[last + 1:] >= SETTLE_TOL).any(axis=1))[0]
        if len(bad) == 0:
            return 0.0
        k = last + 1 + int(bad[-1])
        if k == len(res) - 1:
            return None
        dt = self.sim.timing.dt_outer
        return float((k + 1 - last) * dt)

    # ------------------------------------------------------------ CSV text

    def trajectory_csv(self) -> str:
        dec = self.sim.cfg["outputs"]["decimation"]
        buf = io.StringIO()
        buf.write(f"format_version={FORMAT_VERSION}\n")
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["t", "agent_id", "x", "y", "z", "vx", "vy", "vz", "q0", "q1", "q2", "q3",
                     "p", "q", "r", "T", "omega_p1", "omega_p2", "omega_p3", "omega_p4"])
        t = self.times
        for k in range(0, len(self.trajectory), dec):
            row = self.trajectory[k]
            for i in range(self.sim.n):
                x = row[i]
                v = dcm_from_quaternion(x[6:10]).T @ x[3:6]
                vals = [*x[0:3], *v, *x[6:13], x[13], *x[17:21]]
                wr.writerow([repr(float(t[k])), i] + [repr(float(a)) for a in vals])
        return buf.getvalue()

    def metrics_csv(self) -> str:
        dec = self.sim.cfg["outputs"]["decimation"]
        buf = io.StringIO()
        buf.write(f"format_version={FORMAT_VERSION}\n")
        wr = csv.writer(buf, lineterminator="\n")
        m = self.sim.cset.m if self.sim.cset is not None else 0
        edges = self.sim.cset.edges + 1 if m else []
        head = ["t", "agent_id", "min_clearance"] + [f"c_{a}_{b}" for a, b in edges]
        head += ["pos_error", "vel_error", "psi_cmd", "psi_fit", "fc_solve_residual",
                 "in_range", "inside_body", "saturated"]
        wr.writerow(head)
        t = self.times
        for k in range(0, len(self.records), dec):
            r = self.records[k]
            for i in range(self.sim.n):
                clr = "" if not np.isfinite(r.clearance[i]) else repr(float(r.clearance[i]))
                psi_fit = "" if math.isnan(r.psi_fit) else repr(float(r.psi_fit))
                wr.writerow(
                    [repr(float(t[k])), i, clr]
                    + [repr(float(c)) for c in r.residuals]
                    + [repr(float(r.pos_err[i])), repr(float(r.vel_err[i])), repr(float(r.psi_cmd)), psi_fit,
                       repr(float(r.fc_residual)), int(r.in_range[i]), int(r.inside_hits[i]), int(r.saturated[i])]
                )
        return buf.getvalue()


def atomic_write(path, text: str) -> None:
    """Write via a temporary file in the same directory and rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix="." + path.name + ".", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def run(cfg: dict, backend=None) -> RunResult:
    """Execute a resolved scenario config."""
    return Simulation(cfg, backend).run()
