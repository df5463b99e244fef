"""
Potential-flow velocity field around moving obstacles.

Obstacles are modelled as doublets (spheres) or Rankine source-sink pairs
(ellipsoid-like bodies of revolution) immersed in a uniform stream. The
stream seen by an agent is its own reference velocity; the field returns the
deflected velocity the agent should track to slide around the obstacle.

Functions
---------
doublet_potential, doublet_velocity, doublet_strength
    Closed-form doublet relations in the body's spherical frame.
flow_frame, combined_flow_spherical, induced_velocity
    Full single-body pipeline: frames, tangency-satisfying strength and the
    rotation back to the inertial frame.
superpose
    Sequential multi-body composition (nearest body first).
rankine_velocity
    Source-sink pair in a stream.
sample_field, write_field_csv
    Regular-grid sampling for external streamline plotting.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

FOUR_PI = 4.0 * math.pi
TWO_PI = 2.0 * math.pi

#: Relative speeds below this are treated as "no freestream".
DEGENERATE_SPEED = 1e-9
#: Inside-body queries are moved to this multiple of the effective radius.
PROJECTION_FACTOR = 1.0 + 1e-6
# points this close to the surface count as on it (round-off in |r|)
SURFACE_RTOL = 1e-12


class FlowDomainError(ValueError):
    """Query point sits on a singularity of the flow (r <= 0)."""


class DegenerateFreestreamError(ValueError):
    """Relative freestream is zero, so the body frame is undefined."""


class InsideBodyError(ValueError):
    """Query point lies strictly inside the avoidance surface."""


def _vec3(value, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float).reshape(-1)
    if arr.shape != (3,):
        raise ValueError(f"{name} must be a 3-vector, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class FlowBody:
    """An obstacle in the flow.

    ``kind`` is ``"doublet"`` (sphere of radius ``radius + buffer``) or
    ``"rankine"`` (source and sink ``separation`` apart with strength
    ``strength``).
    """

    center: np.ndarray
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    kind: str = "doublet"
    radius: float = 1.0
    buffer: float = 0.0
    separation: float = 1.0
    strength: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "center", _vec3(self.center, "center"))
        object.__setattr__(self, "velocity", _vec3(self.velocity, "velocity"))
        if self.kind not in ("doublet", "rankine"):
            raise ValueError(f"unknown flow body kind {self.kind!r}")
        if not self.radius > 0:
            raise ValueError("radius must be > 0")
        if not self.buffer >= 0:
            raise ValueError("buffer must be >= 0")
        if self.kind == "rankine":
            if not self.separation > 0:
                raise ValueError("separation must be > 0")
            if not self.strength > 0:
                raise ValueError("strength must be > 0")

    @property
    def effective_radius(self) -> float:
        return self.radius + self.buffer


@dataclass(frozen=True)
class FlowFrame:
    elevation: float
    azimuth: float
    inertial_to_local: np.ndarray
    spherical_to_local: np.ndarray
    theta: float
    phi: float
    r: float


@dataclass(frozen=True)
class FlowSolution:
    mu: float
    spherical: np.ndarray
    velocity: np.ndarray
    relative_freestream: np.ndarray
    inside: bool = False


def doublet_potential(r: float, theta: float, mu: float) -> float:
    if r <= 0:
        raise FlowDomainError("doublet potential is singular at r <= 0")
    return -mu * math.cos(theta) / (FOUR_PI * r * r)


def doublet_velocity(r: float, theta: float, mu: float) -> tuple[float, float, float]:
    """Spherical components ``(v_r, v_theta, v_phi)`` of the doublet gradient.

    Both components decay as ``r**-3``.
    """
    if r <= 0:
        raise FlowDomainError("doublet velocity is singular at r <= 0")
    r3 = r * r * r
    return (
        mu * math.cos(theta) / (TWO_PI * r3),
        mu * math.sin(theta) / (FOUR_PI * r3),
        0.0,
    )


def doublet_strength(effective_radius: float, speed: float) -> float:
    """Doublet strength that makes the sphere of ``effective_radius`` a streamsurface."""
    if not effective_radius > 0:
        raise ValueError("effective radius must be > 0")
    if speed < 0:
        raise ValueError("speed must be >= 0")
    return -TWO_PI * effective_radius ** 3 * speed


def _rot_elevation(el: float) -> np.ndarray:
    c, s = math.cos(el), math.sin(el)
    return np.array([[c, 0.0, -s], [0.0, 1.0, 0.0], [s, 0.0, c]])


def _rot_azimuth(az: float) -> np.ndarray:
    c, s = math.cos(az), math.sin(az)
    return np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])


def spherical_to_local_matrix(theta: float, phi: float) -> np.ndarray:
    st, ct = math.sin(theta), math.cos(theta)
    sp, cp = math.sin(phi), math.cos(phi)
    return np.array(
        [
            [st * cp, ct * cp, -sp],
            [st * sp, ct * sp, cp],
            [ct, -st, 0.0],
        ]
    )


def flow_frame(v_rel, r_rel) -> FlowFrame:
    """Build the body-local frames for relative stream ``v_rel`` at offset ``r_rel``.

    The local z axis is aligned with ``v_rel``; ``theta`` and ``phi`` are the
    polar and azimuthal angles of ``r_rel`` in that frame.
    """
    v = _vec3(v_rel, "v_rel")
    rr = _vec3(r_rel, "r_rel")
    speed = float(np.linalg.norm(v))
    if speed < DEGENERATE_SPEED:
        raise DegenerateFreestreamError("relative freestream is zero")
    dist = float(np.linalg.norm(rr))
    if dist <= 0:
        raise FlowDomainError("query point coincides with the body center")

    elevation = math.acos(max(-1.0, min(1.0, v[2] / speed)))
    azimuth = math.atan2(v[1], v[0])
    t_id = _rot_elevation(elevation) @ _rot_azimuth(azimuth)

    r_local = t_id @ rr
    theta = math.acos(max(-1.0, min(1.0, r_local[2] / dist)))
    phi = math.atan2(r_local[1], r_local[0])
    return FlowFrame(
        elevation=elevation,
        azimuth=azimuth,
        inertial_to_local=t_id,
        spherical_to_local=spherical_to_local_matrix(theta, phi),
        theta=theta,
        phi=phi,
        r=dist,
    )


def combined_flow_spherical(frame: FlowFrame, speed: float, mu: float) -> np.ndarray:
    """Uniform stream plus doublet, in the body's spherical components."""
    if frame.r <= 0:
        raise FlowDomainError("r must be > 0")
    ct, st = math.cos(frame.theta), math.sin(frame.theta)
    r3 = frame.r ** 3
    return np.array(
        [
            speed * ct + mu * ct / (TWO_PI * r3),
            -speed * st + mu * st / (FOUR_PI * r3),
            0.0,
        ]
    )


def induced_velocity(
    agent_pos,
    agent_vel,
    body: FlowBody,
    freestream=None,
    *,
    project_inside: bool = False,
) -> FlowSolution:
    """Absolute velocity of the stream at ``agent_pos`` deflected by ``body``.

    ``freestream`` defaults to ``agent_vel``. Queries strictly inside the
    avoidance sphere raise :class:`InsideBodyError` unless ``project_inside``
    is set, in which case the point is moved radially just outside the
    surface and the solution is flagged.
    """
    pos = _vec3(agent_pos, "agent_pos")
    v_inf = _vec3(agent_vel if freestream is None else freestream, "freestream")
    if body.kind == "rankine":
        v = rankine_velocity(pos, body, v_inf)
        return FlowSolution(0.0, np.zeros(3), v, v_inf - body.velocity)

    v_rel = v_inf - body.velocity
    speed = float(np.linalg.norm(v_rel))
    r_rel = pos - body.center
    dist = float(np.linalg.norm(r_rel))
    r_eff = body.effective_radius

    inside = dist < r_eff * (1.0 - SURFACE_RTOL)
    if inside:
        if not project_inside:
            raise InsideBodyError(f"query at r={dist:.6g} is inside R_eff={r_eff:.6g}")
        if dist == 0.0:
            # no radial direction; push upstream along the stream axis
            direction = -v_rel / speed if speed >= DEGENERATE_SPEED else np.array([0.0, 0.0, 1.0])
        else:
            direction = r_rel / dist
        r_rel = direction * (r_eff * PROJECTION_FACTOR)

    if speed < DEGENERATE_SPEED:
        return FlowSolution(0.0, np.zeros(3), v_inf.copy(), v_rel, inside)

    frame = flow_frame(v_rel, r_rel)
    mu = doublet_strength(r_eff, speed)
    v_sph = combined_flow_spherical(frame, speed, mu)
    v_h = body.velocity + frame.inertial_to_local.T @ (frame.spherical_to_local @ v_sph)
    return FlowSolution(mu, v_sph, v_h, v_rel, inside)


def _order_bodies(pos: np.ndarray, bodies: Sequence[FlowBody]) -> list[int]:
    dists = [float(np.linalg.norm(pos - b.center)) for b in bodies]
    return sorted(range(len(bodies)), key=lambda k: (dists[k], k))


def superpose_detailed(
    agent_pos,
    agent_vel,
    bodies: Sequence[FlowBody],
    freestream=None,
    *,
    mode: str = "sequential",
    project_inside: bool = False,
) -> tuple[np.ndarray, int]:
    """Compose all ``bodies``; returns ``(velocity, number_of_inside_hits)``.

    ``mode="sequential"`` feeds each body's output to the next body as its
    freestream, nearest body first. ``mode="additive"`` sums the individual
    perturbations instead and exists for comparison only.
    """
    pos = _vec3(agent_pos, "agent_pos")
    v_inf = _vec3(agent_vel if freestream is None else freestream, "freestream")
    hits = 0
    if mode == "sequential":
        v = v_inf.copy()
        for k in _order_bodies(pos, bodies):
            sol = induced_velocity(pos, None, bodies[k], v, project_inside=project_inside)
            hits += sol.inside
            v = sol.velocity
        return v, hits
    if mode == "additive":
        v = v_inf.copy()
        for k in _order_bodies(pos, bodies):
            sol = induced_velocity(pos, None, bodies[k], v_inf, project_inside=project_inside)
            hits += sol.inside
            v = v + (sol.velocity - v_inf)
        return v, hits
    raise ValueError(f"unknown superposition mode {mode!r}")


def superpose(agent_pos, agent_vel, bodies: Sequence[FlowBody], freestream=None, **kwargs) -> np.ndarray:
    return superpose_detailed(agent_pos, agent_vel, bodies, freestream, **kwargs)[0]


def avoidance_force(v_h, v_agent, gain: float) -> np.ndarray:
    """Proportional velocity-tracking command ``gain * (v_h - v_agent)``."""
    if gain < 0:
        raise ValueError("gain must be >= 0")
    return gain * (np.asarray(v_h, dtype=float) - np.asarray(v_agent, dtype=float))


def rankine_points(body: FlowBody, freestream) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Source position, sink position and stream axis for a Rankine body.

    The source sits upstream of the center so the body's nose faces the
    oncoming relative stream.
    """
    v_rel = _vec3(freestream, "freestream") - body.velocity
    speed = float(np.linalg.norm(v_rel))
    if speed < DEGENERATE_SPEED:
        raise DegenerateFreestreamError("relative freestream is zero")
    axis = v_rel / speed
    half = 0.5 * body.separation
    return body.center - half * axis, body.center + half * axis, axis


def rankine_velocity(agent_pos, body: FlowBody, freestream) -> np.ndarray:
    """Absolute stream velocity around a moving source-sink pair."""
    pos = _vec3(agent_pos, "agent_pos")
    v_inf = _vec3(freestream, "freestream")
    v_rel = v_inf - body.velocity
    if float(np.linalg.norm(v_rel)) < DEGENERATE_SPEED:
        return v_inf.copy()
    source, sink, _ = rankine_points(body, v_inf)
    d1 = pos - source
    d2 = pos - sink
    r1 = float(np.linalg.norm(d1))
    r2 = float(np.linalg.norm(d2))
    if r1 == 0.0 or r2 == 0.0:
        raise FlowDomainError("query point coincides with the source or sink")
    lam = body.strength
    # gradients of -lam/(4 pi r1) and +lam/(4 pi r2)
    perturbation = lam / FOUR_PI * (d1 / r1 ** 3 - d2 / r2 ** 3)
    return body.velocity + v_rel + perturbation


# --------------------------------------------------------------------------
# grid sampling


def grid_points(bounds: Sequence[float], counts: Sequence[int]) -> np.ndarray:
    """Nodes of a regular grid, x varying slowest. ``bounds`` is (x0,x1,y0,y1,z0,z1)."""
    if len(bounds) != 6 or len(counts) != 3:
        raise ValueError("bounds needs 6 values and counts 3")
    axes = []
    for k in range(3):
        lo, hi, n = float(bounds[2 * k]), float(bounds[2 * k + 1]), int(counts[k])
        if n < 1 or hi < lo or (n > 1 and hi == lo):
            raise ValueError(f"invalid grid axis {k}: [{lo}, {hi}] with {n} nodes")
        axes.append(np.linspace(lo, hi, n) if n > 1 else np.array([lo]))
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=1)


def sample_field(
    points: Iterable,
    bodies: Sequence[FlowBody],
    freestream,
    mode: str = "sequential",
) -> list[tuple[np.ndarray, np.ndarray | None]]:
    """Velocity at each point; ``None`` marks a node inside a body."""
    rows = []
    for p in points:
        p = _vec3(p, "point")
        try:
            v, _ = superpose_detailed(p, None, bodies, freestream, mode=mode)
        except (InsideBodyError, FlowDomainError):
            rows.append((p, None))
        else:
            rows.append((p, v))
    return rows


def field_csv_text(rows, format_version: int = 1) -> str:
    """CSV text for :func:`sample_field` rows; inside nodes have blank velocity."""
    buf = io.StringIO()
    buf.write(f"format_version={format_version}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["x", "y", "z", "vx", "vy", "vz", "inside"])
    for p, v in rows:
        if v is None:
            writer.writerow([repr(float(c)) for c in p] + ["", "", "", 1])
        else:
            writer.writerow([repr(float(c)) for c in p] + [repr(float(c)) for c in v] + [0])
    return buf.getvalue()


def write_field_csv(path, rows, format_version: int = 1) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(field_csv_text(rows, format_version))
