"""
Scenario configuration: defaults, JSON-schema validation, invariant checks
and ``dotted.path=value`` overrides.

A scenario file only has to list what differs from :data:`DEFAULTS`; the
resolved config is the deep merge of the two.
"""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .formation import DELTA8_EDGES, jacobian_rank, rigidity_edge_count, ConstraintSet

DEFAULTS: dict = {
    "format_version": 1,
    "name": "unnamed",
    "mode": "formation",
    "seed": 0,
    "timing": {"dt_inner": 0.001, "dt_outer": 0.01, "duration": 60.0},
    "vehicle": {
        "mass": 1.023,
        "arm": 0.2223,
        "k_thrust": 1.4865e-7,
        "k_drag": 2.925e-9,
        "inertia": [0.0095, 0.0095, 0.0186],
        "g": 9.81,
        "max_rotor_speed": 8000.0,
        "max_tilt_deg": 35.0,
        "pid": {
            "att_kp": [8.0, 8.0, 8.0],
            "att_ki": [0.1, 0.1, 0.1],
            "att_kd": [0.0, 0.0, 0.0],
            "rate_kp": [2.0, 2.0, 2.0],
            "rate_ki": [0.2, 0.2, 0.2],
            "rate_kd": [0.001, 0.001, 0.001],
            "att_int_limit": 0.5,
            "rate_int_limit": 0.5,
            "max_rate": 4.0,
            "torque_limit_xy": 1.0,
            "torque_limit_z": 0.1,
        },
    },
    "sensing": {
        "radius": 10.0,
        "half_height": 3.0,
        "sigma_meas": 0.05,
        "q_a": 0.5,
        "coast_time": 1.0,
        "noise": True,
        "filter": True,
    },
    "avoidance": {
        "enabled": True,
        "R_d": 1.0,
        "epsilon": 1.0,
        "K_h": 0.3,
        "superposition": "sequential",
        "max_guidance_speed": 3.0,
    },
    "obstacles": [],
    "agents": {"count": 8, "initial_positions": None, "initial_velocities": None},
    "formation": {
        "shape": "delta",
        "spacing": 3.0,
        "stagger": 1.0,
        "slots": None,
        "edges": None,
        "gains": {"alpha": 1.0, "beta": None, "gamma": 0.0},
        "integral_limit": 10.0,
        "k_p": 1.0,
        "k_d": 2.0,
        "path": {"start": [0.0, 0.0, 20.0], "velocity": [0.0, 1.0, 0.0]},
        "yaw": {"kind": "constant", "value": 0.0},
        "reallocate_interval": 0.0,
    },
    "reference": {
        "type": "figure_eight",
        "A": 10.0,
        "B": 10.0,
        "period": 40.0,
        "altitude": 20.0,
        "center": [0.0, 0.0],
        "position": [0.0, 0.0, 20.0],
        "k_p": 1.0,
        "k_d": 2.0,
    },
    "metrics": {"settle_time": 20.0, "avoidance_margin": 5.0},
    "outputs": {"decimation": 1},
}


class ConfigError(ValueError):
    """One or more validation failures; ``errors`` holds ``(path, message)`` pairs."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"{p}: {m}" for p, m in self.errors))


def load_schema() -> dict:
    return json.loads(resources.files("hydrovrb").joinpath("schema.json").read_text())


def deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _path(parts) -> str:
    return "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in parts) or "."


def schema_errors(raw: dict) -> list[tuple[str, str]]:
    validator = jsonschema.Draft7Validator(load_schema())
    errs = sorted(validator.iter_errors(raw), key=lambda e: (list(map(str, e.absolute_path)), e.message))
    return [(_path(e.absolute_path), e.message) for e in errs]


def set_dotted(cfg: dict, dotted: str, value) -> None:
    """Assign ``value`` at ``a.b.c``; intermediate keys must already exist."""
    keys = dotted.split(".")
    node = cfg
    for i, k in enumerate(keys[:-1]):
        if not isinstance(node, dict) or k not in node:
            raise ConfigError([("." + ".".join(keys[: i + 1]), "unknown key")])
        node = node[k]
    if not isinstance(node, dict) or keys[-1] not in node:
        raise ConfigError([("." + dotted, "unknown key")])
    node[keys[-1]] = value


def parse_override(text: str) -> tuple[str, object]:
    """``key=value`` with the value parsed as JSON when possible, else kept as a string."""
    if "=" not in text:
        raise ConfigError([(text, "override must look like dotted.path=value")])
    key, val = text.split("=", 1)
    try:
        return key.strip(), json.loads(val)
    except json.JSONDecodeError:
        return key.strip(), val


# --------------------------------------------------------------------------
# formation geometry

GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


def delta_slots(n: int, spacing: float, stagger: float, generic: bool = False) -> np.ndarray:
    """Delta (arrow-head) slots, tip forward along local +x, as a 3 x n matrix.

    Rows of a triangular lattice are filled tip first; a last row that cannot
    be filled keeps its outermost positions. Altitudes alternate ``0, +s, -s``
    so that every four consecutive slots span 3-D space.
    """
    pts = []
    row = 0
    while len(pts) < n:
        width = row + 1
        remaining = n - len(pts)
        ys = [(k - row / 2.0) * spacing for k in range(width)]
        if remaining < width:
            # outer corners first
            order = sorted(range(width), key=lambda k: (-abs(k - row / 2.0), k))[:remaining]
            ys = [ys[k] for k in sorted(order, key=lambda k: -ys[k])]
        else:
            ys = ys[::-1]
        for y in ys:
            pts.append([-row * spacing * math.sqrt(3) / 2.0, y, 0.0])
        row += 1
    pts = np.array(pts[:n])
    pts[:, 2] = _altitudes(n, stagger, generic)
    return _break_rows(pts.T, stagger)


def _altitudes(n: int, stagger: float, generic: bool = False) -> np.ndarray:
    """Repeating ``0, +s, -s``; with ``generic`` the slots after the third get
    golden-angle samples of ``s cos`` instead, which avoids the accidental
    coplanar quadruples the periodic pattern produces for some sizes."""
    z = stagger * np.array([0.0, 1.0, -1.0])[np.arange(n) % 3]
    if generic:
        z[3:] = stagger * np.cos(GOLDEN_ANGLE * np.arange(3, n))
    return z


def _break_rows(slots: np.ndarray, stagger: float) -> np.ndarray:
    """Zig-zag rows of four or more slots along x; four coplanar consecutive
    slots would leave the chain edge set flexible."""
    out = slots.copy()
    xs = np.round(slots[0], 9)
    for x in np.unique(xs):
        idx = np.nonzero(xs == x)[0]
        if len(idx) >= 4:
            out[0, idx] += 0.5 * stagger * np.where(np.arange(len(idx)) % 2 == 0, 1.0, -1.0)
    return out


def line_slots(n: int, spacing: float, stagger: float) -> np.ndarray:
    """Abreast line along local y, on a thin helix so the framework is not flat."""
    k = np.arange(n)
    ang = 2.0 * math.pi * k / 3.0
    return np.stack([stagger * np.cos(ang), (k - (n - 1) / 2.0) * spacing, stagger * np.sin(ang)])


def grid_slots(n: int, spacing: float, stagger: float, generic: bool = False) -> np.ndarray:
    cols = int(math.ceil(math.sqrt(n)))
    k = np.arange(n)
    i, j = k // cols, k % cols
    return _break_rows(np.stack([-i * spacing, (j - (cols - 1) / 2.0) * spacing, _altitudes(n, stagger, generic)]), stagger)


def chain_edges(n: int) -> np.ndarray:
    """Triangle on the first three slots, then each slot tied to its three predecessors.

    Yields ``3n - 6`` edges (1-based); equals the classic delta-8 pair list for n = 8.
    """
    edges = [(1, 2), (1, 3), (2, 3)]
    for k in range(4, n + 1):
        edges += [(k - 3, k), (k - 2, k), (k - 1, k)]
    return np.array(edges, dtype=int)


def slot_matrix(cfg: dict) -> np.ndarray:
    f = cfg["formation"]
    n = cfg["agents"]["count"]
    if f["slots"] is not None:
        return np.asarray(f["slots"], dtype=float).reshape(-1, 3).T
    shape = f["shape"]
    if shape == "line":
        return line_slots(n, f["spacing"], f["stagger"])
    if shape in ("delta", "grid"):
        build = delta_slots if shape == "delta" else grid_slots
        slots = build(n, f["spacing"], f["stagger"])
        edges = slot_edges(cfg)
        if n >= 4 and len(edges) == rigidity_edge_count(n) and edges.min() >= 1 and edges.max() <= n:
            try:
                cset = ConstraintSet.from_geometry(slots.T, edges - 1)
                if jacobian_rank(slots.T, cset) < len(edges):
                    slots = build(n, f["spacing"], f["stagger"], generic=True)
            except ValueError:
                pass
        return slots
    raise ConfigError([(".formation.shape", f"shape {shape!r} needs explicit slots")])


def slot_edges(cfg: dict) -> np.ndarray:
    """1-based edge list between slots."""
    e = cfg["formation"]["edges"]
    if e is None:
        n = cfg["agents"]["count"]
        if n == 8:
            return np.array(DELTA8_EDGES, dtype=int)
        return chain_edges(n)
    return np.asarray(e, dtype=int).reshape(-1, 2)


# --------------------------------------------------------------------------


def invariant_errors(cfg: dict) -> list[tuple[str, str]]:
    errs = []
    tm = cfg["timing"]
    ratio = tm["dt_outer"] / tm["dt_inner"]
    if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio) or round(ratio) < 1:
        errs.append((".timing.dt_outer", "must be an integer multiple of dt_inner"))
    if cfg["mode"] == "single" and cfg["agents"]["count"] != 1:
        errs.append((".agents.count", "single mode flies exactly one agent"))
    n = cfg["agents"]["count"]
    for key in ("initial_positions", "initial_velocities"):
        v = cfg["agents"][key]
        if v is not None and len(v) != n:
            errs.append((f".agents.{key}", f"expected {n} rows, got {len(v)}"))
    g = cfg["formation"]["gains"]
    if g["beta"] is not None and g["beta"] != g["alpha"]:
        errs.append((".formation.gains.beta", "critical damping requires beta == alpha"))
    ref = cfg["reference"]
    if ref["type"] == "figure_eight" and ref["period"] <= 0:
        errs.append((".reference.period", "must be > 0"))
    for k, ob in enumerate(cfg["obstacles"]):
        if ob.get("kind", "doublet") == "rankine" and "separation" not in ob:
            errs.append((f".obstacles[{k}].separation", "rankine bodies need a separation"))
    if cfg["mode"] == "formation":
        errs += _formation_errors(cfg)
    return errs


def _formation_errors(cfg: dict) -> list[tuple[str, str]]:
    n = cfg["agents"]["count"]
    if n < 3:
        return [(".agents.count", "a formation needs at least 3 agents")]
    errs = []
    try:
        slots = slot_matrix(cfg)
    except ConfigError as exc:
        return exc.errors
    if slots.shape[1] != n:
        errs.append((".formation.slots", f"expected {n} slots, got {slots.shape[1]}"))
        return errs
    edges = slot_edges(cfg)
    need = rigidity_edge_count(n)
    if len(edges) != need:
        errs.append((".formation.edges", f"rigidity requires {need} edges, got {len(edges)}"))
        return errs
    if edges.min() < 1 or edges.max() > n:
        errs.append((".formation.edges", f"slot indices must lie in 1..{n}"))
        return errs
    try:
        cset = ConstraintSet.from_geometry(slots.T, edges - 1)
    except ValueError as exc:
        errs.append((".formation.edges", str(exc)))
        return errs
    rank = jacobian_rank(slots.T, cset)
    if rank < need:
        errs.append((".formation.slots", f"edge set is not rigid at the slot geometry (rank {rank} < {need})"))
    return errs


def resolve(raw: dict, overrides=()) -> dict:
    """Validate ``raw`` and return the merged config, raising :class:`ConfigError`."""
    errs = schema_errors(raw)
    if errs:
        raise ConfigError(errs)
    cfg = deep_merge(DEFAULTS, raw)
    for key, value in overrides:
        set_dotted(cfg, key, value)
    if overrides:
        errs = schema_errors(cfg)
        if errs:
            raise ConfigError(errs)
    errs = invariant_errors(cfg)
    if errs:
        raise ConfigError(errs)
    if cfg["formation"]["gains"]["beta"] is None:
        cfg["formation"]["gains"]["beta"] = cfg["formation"]["gains"]["alpha"]
    return cfg


def load(path, overrides=()) -> dict:
    path = Path(path)
    if not path.exists():
        path = bundled_path(str(path))
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError([(".", f"invalid JSON: {exc}")]) from exc
    return resolve(raw, overrides)


def bundled_path(name: str) -> Path:
    """Resolve a bundled scenario name such as ``delta8.json``."""
    p = resources.files("hydrovrb").joinpath("scenarios", Path(name).name)
    if not p.is_file():
        raise FileNotFoundError(name)
    return Path(str(p))


def bundled_scenarios() -> list[str]:
    d = resources.files("hydrovrb").joinpath("scenarios")
    return sorted(p.name for p in d.iterdir() if p.name.endswith(".json"))


@dataclass(frozen=True)
class Timing:
    dt_inner: float
    dt_outer: float
    duration: float

    @property
    def substeps(self) -> int:
        return int(round(self.dt_outer / self.dt_inner))

    @property
    def ticks(self) -> int:
        return int(round(self.duration / self.dt_outer))
