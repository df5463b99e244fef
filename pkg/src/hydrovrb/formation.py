"""
Virtual-rigid-body formation keeping through distance-constraint forces.

Each edge ``(i, j)`` of a :class:`ConstraintSet` holds the residual
``c = |r_i - r_j| - d``. The constraint force is the minimum-norm (mass
weighted) force along the constraint gradients that gives the residuals the
stabilised error dynamics ``c'' + 2 alpha c' + beta^2 c + gamma int(c) = 0``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

log = logging.getLogger(__name__)

#: Agents closer than this make the constraint direction undefined.
COINCIDENT_TOL = 1e-9
#: Condition number above which ``J M^-1 J^T`` is treated as singular.
MAX_CONDITION = 1e12

# 1-based vehicle pairs of the eight-agent delta formation
DELTA8_EDGES = (
    (1, 2), (1, 3), (1, 4), (2, 3), (2, 4), (2, 5), (3, 4), (3, 5), (3, 6),
    (4, 5), (4, 6), (4, 7), (5, 6), (5, 7), (5, 8), (6, 7), (6, 8), (7, 8),
)


class SingularConstraintError(ValueError):
    """Two constrained agents coincide."""


class DegenerateConfigurationError(RuntimeError):
    """``J M^-1 J^T`` is (numerically) singular for this configuration."""


def rigidity_edge_count(n_agents: int) -> int:
    """Independent distance constraints needed to make ``n_agents`` points rigid in 3-D."""
    if n_agents < 3:
        raise ValueError("rigidity counting needs at least 3 agents")
    return 3 * n_agents - 6


@dataclass
class ConstraintSet:
    """Edges (0-based, ``i < j``), desired distances and Baumgarte gains.

    ``integral`` is the running time integral of each residual; it is the only
    mutable state and is clamped to ``+-integral_limit``.
    """

    edges: np.ndarray
    distances: np.ndarray
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 0.0
    integral_limit: float = 10.0
    integral: np.ndarray = field(default=None)
    _last_c: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=int).reshape(-1, 2)
        dist = np.asarray(self.distances, dtype=float).reshape(-1)
        if len(edges) != len(dist):
            raise ValueError("one desired distance per edge is required")
        seen = set()
        for i, j in edges:
            if i == j:
                raise ValueError(f"edge ({i}, {j}) joins an agent to itself")
            if i < 0 or j < 0:
                raise ValueError("agent indices must be non-negative")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise ValueError(f"duplicate edge {key}")
            seen.add(key)
        if np.any(dist <= 0):
            raise ValueError("desired distances must be > 0")
        if self.alpha < 0 or self.beta < 0 or self.gamma < 0:
            raise ValueError("Baumgarte gains must be >= 0")
        self.edges = np.sort(edges, axis=1)
        self.distances = dist
        if self.integral is None:
            self.integral = np.zeros(len(dist))

    @classmethod
    def from_geometry(cls, positions, edges, **gains) -> "ConstraintSet":
        """Desired distances measured from a reference geometry (e.g. slot positions)."""
        pos = np.asarray(positions, dtype=float).reshape(-1, 3)
        e = np.asarray(edges, dtype=int).reshape(-1, 2)
        d = np.linalg.norm(pos[e[:, 0]] - pos[e[:, 1]], axis=1)
        return cls(e, d, **gains)

    @property
    def m(self) -> int:
        return len(self.distances)

    def accumulate(self, c, dt: float) -> None:
        """Trapezoidal update of the residual integral."""
        c = np.asarray(c, dtype=float)
        prev = c if self._last_c is None else self._last_c
        self.integral = np.clip(
            self.integral + 0.5 * dt * (prev + c), -self.integral_limit, self.integral_limit
        )
        self._last_c = c.copy()

    def reset_integral(self) -> None:
        self.integral = np.zeros(self.m)
        self._last_c = None


def _as_points(x) -> np.ndarray:
    return np.asarray(x, dtype=float).reshape(-1, 3)


def _edge_geometry(positions, cset: ConstraintSet):
    pos = _as_points(positions)
    i, j = cset.edges[:, 0], cset.edges[:, 1]
    if np.any(cset.edges >= len(pos)):
        raise ValueError("edge refers to an agent index beyond the position array")
    diff = pos[i] - pos[j]
    dist = np.linalg.norm(diff, axis=1)
    bad = np.nonzero(dist <= COINCIDENT_TOL)[0]
    if len(bad):
        k = int(bad[0])
        raise SingularConstraintError(
            f"agents {int(i[k])} and {int(j[k])} coincide (|r_i - r_j| = {dist[k]:.3g})"
        )
    return pos, diff, dist


def constraint_residuals(positions, cset: ConstraintSet) -> np.ndarray:
    _, _, dist = _edge_geometry(positions, cset)
    return dist - cset.distances


def constraint_jacobian(positions, velocities, cset: ConstraintSet) -> tuple[np.ndarray, np.ndarray]:
    """Dense ``(J, Jdot)``, both of shape ``(m, 3N)``."""
    pos, diff, dist = _edge_geometry(positions, cset)
    vel = _as_points(velocities)
    n = len(pos)
    i, j = cset.edges[:, 0], cset.edges[:, 1]
    u = diff / dist[:, None]
    w = vel[i] - vel[j]
    du = (w - u * np.sum(u * w, axis=1)[:, None]) / dist[:, None]

    m = cset.m
    J = np.zeros((m, 3 * n))
    Jd = np.zeros((m, 3 * n))
    rows = np.arange(m)
    for k in range(3):
        J[rows, 3 * i + k] = u[:, k]
        J[rows, 3 * j + k] = -u[:, k]
        Jd[rows, 3 * i + k] = du[:, k]
        Jd[rows, 3 * j + k] = -du[:, k]
    return J, Jd


@dataclass
class ConstraintForceResult:
    force: np.ndarray
    multipliers: np.ndarray
    residual: float
    rhs_norm: float
    condition: float


def constraint_force_detailed(
    positions,
    velocities,
    masses,
    applied_force,
    cset: ConstraintSet,
) -> ConstraintForceResult:
    """Constraint force for the stacked ``applied_force`` (``f_ext + f_u``, 3N).

    Solves ``(J M^-1 J^T) lam = -J M^-1 f - Jdot rdot - 2 alpha cdot - beta^2 c
    - gamma int(c)`` with a Cholesky factorisation and returns ``J^T lam``.
    """
    pos = _as_points(positions)
    n = len(pos)
    rdot = np.asarray(velocities, dtype=float).reshape(-1)
    f = np.asarray(applied_force, dtype=float).reshape(-1)
    mass = np.broadcast_to(np.asarray(masses, dtype=float), (n,))
    if np.any(mass <= 0):
        raise ValueError("masses must be > 0")
    inv_m = np.repeat(1.0 / mass, 3)

    J, Jd = constraint_jacobian(pos, rdot, cset)
    c = constraint_residuals(pos, cset)
    cdot = J @ rdot
    A = (J * inv_m) @ J.T
    rhs = (
        -(J @ (inv_m * f))
        - Jd @ rdot
        - 2.0 * cset.alpha * cdot
        - cset.beta ** 2 * c
        - cset.gamma * cset.integral
    )

    eig = np.linalg.eigvalsh(A)
    cond = math.inf if eig[0] <= 0 else float(eig[-1] / eig[0])
    if cond > MAX_CONDITION:
        log.error("degenerate formation configuration (cond=%.3g): %s", cond, pos.tolist())
        raise DegenerateConfigurationError(
            f"J M^-1 J^T is singular (condition {cond:.3g}); check edge list and agent positions"
        )
    lam = linalg.cho_solve(linalg.cho_factor(A, lower=True), rhs)
    residual = float(np.linalg.norm(A @ lam - rhs))
    return ConstraintForceResult(J.T @ lam, lam, residual, float(np.linalg.norm(rhs)), cond)


def constraint_force(positions, velocities, masses, applied_force, cset: ConstraintSet) -> np.ndarray:
    return constraint_force_detailed(positions, velocities, masses, applied_force, cset).force


def jacobian_rank(positions, cset: ConstraintSet, tol: float = 1e-9) -> int:
    """Numerical rank of J at ``positions``; full rank means infinitesimal rigidity here."""
    J, _ = constraint_jacobian(positions, np.zeros_like(_as_points(positions)), cset)
    s = np.linalg.svd(J, compute_uv=False)
    return int(np.sum(s > tol * max(1.0, s[0])))


@dataclass
class DecayReport:
    rate: float
    steady_state: float
    initial: float
    envelope_error: float


def critically_damped_envelope(t, c0: float, cdot0: float, omega: float) -> np.ndarray:
    """Closed-form solution of ``c'' + 2 w c' + w^2 c = 0``."""
    t = np.asarray(t, dtype=float)
    return (c0 + (cdot0 + omega * c0) * t) * np.exp(-omega * t)


def baumgarte_error_dynamics_check(times, residuals, alpha: float | None = None, cdot0=None) -> DecayReport:
    """Summarise the decay of ``|c|`` along a fixed-step trajectory.

    ``rate`` comes from a log-linear fit of the norm over the portion of the
    trajectory above 1e-12; ``steady_state`` is the mean norm over the last
    10 % of samples. When ``alpha`` is given (critically damped gains,
    ``alpha == beta``), ``envelope_error`` is the worst relative deviation of
    ``|c|`` from the closed-form envelope, using ``cdot0`` as initial rate.
    """
    t = np.asarray(times, dtype=float)
    c = np.asarray(residuals, dtype=float)
    if c.ndim == 1:
        c = c[:, None]
    norms = np.linalg.norm(c, axis=1)
    initial = float(norms[0])
    tail = max(1, len(norms) // 10)
    steady = float(np.mean(norms[-tail:]))

    mask = norms > 1e-12
    if mask.sum() >= 2:
        slope = np.polyfit(t[mask], np.log(norms[mask]), 1)[0]
        rate = float(-slope)
    else:
        rate = math.inf

    env_err = math.nan
    if alpha is not None and initial > 0:
        cd0 = np.zeros(c.shape[1]) if cdot0 is None else np.asarray(cdot0, dtype=float).reshape(-1)
        env = np.stack(
            [critically_damped_envelope(t, c[0, k], cd0[k], alpha) for k in range(c.shape[1])], axis=1
        )
        env_norm = np.linalg.norm(env, axis=1)
        scale = np.maximum(env_norm, 1e-3 * initial)
        env_err = float(np.max(np.abs(norms - env_norm) / scale))
    return DecayReport(rate=rate, steady_state=steady, initial=initial, envelope_error=env_err)
