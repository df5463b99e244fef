import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hydrovrb import flowfield as ff
from hydrovrb.flowfield import FlowBody

from conftest import random_unit


def cart_potential(p, mu):
    """Doublet potential in Cartesian form, axis along +z."""
    r = np.linalg.norm(p)
    return -mu * p[2] / (4.0 * math.pi * r ** 3)


def cart_velocity(p, mu):
    """Analytic doublet velocity mapped to Cartesian axes."""
    r = np.linalg.norm(p)
    theta = math.acos(p[2] / r)
    phi = math.atan2(p[1], p[0])
    vr, vt, vp = ff.doublet_velocity(r, theta, mu)
    return ff.spherical_to_local_matrix(theta, phi) @ np.array([vr, vt, vp])


def test_potential_matches_cartesian_form(rng):
    for _ in range(20):
        p = rng.normal(size=3) * 3
        r = np.linalg.norm(p)
        assert ff.doublet_potential(r, math.acos(p[2] / r), 2.5) == pytest.approx(cart_potential(p, 2.5), rel=1e-12)


def test_velocity_is_gradient_of_potential(rng):
    mu = -3.7
    h = 1e-5
    for _ in range(100):
        p = random_unit(rng) * rng.uniform(1.0, 4.0)
        grad = np.array(
            [(cart_potential(p + h * e, mu) - cart_potential(p - h * e, mu)) / (2 * h) for e in np.eye(3)]
        )
        v = cart_velocity(p, mu)
        assert np.linalg.norm(grad - v) <= 1e-6 * np.linalg.norm(v)


def test_potential_is_harmonic(rng):
    mu = 5.0
    h = 1e-3
    for _ in range(100):
        p = random_unit(rng) * rng.uniform(1.0, 4.0)
        lap = sum(
            cart_potential(p + h * e, mu) - 2 * cart_potential(p, mu) + cart_potential(p - h * e, mu)
            for e in np.eye(3)
        ) / h ** 2
        assert abs(lap) <= 1e-4


def test_strength_sign_and_scaling():
    assert ff.doublet_strength(2.0, 1.0) == pytest.approx(-2 * math.pi * 8)
    assert ff.doublet_strength(1.0, 0.0) == 0.0
    with pytest.raises(ValueError):
        ff.doublet_strength(0.0, 1.0)


def test_singular_origin():
    with pytest.raises(ff.FlowDomainError):
        ff.doublet_velocity(0.0, 0.1, 1.0)
    with pytest.raises(ff.FlowDomainError):
        ff.doublet_potential(0.0, 0.1, 1.0)


def test_spherical_matrix_is_rotation(rng):
    for th, ph in rng.uniform([0, -math.pi], [math.pi, math.pi], size=(20, 2)):
        M = ff.spherical_to_local_matrix(th, ph)
        assert np.allclose(M.T @ M, np.eye(3), atol=1e-14)
        # first column is the radial unit vector
        assert np.allclose(M[:, 0], [math.sin(th) * math.cos(ph), math.sin(th) * math.sin(ph), math.cos(th)])


def test_frame_aligns_local_z_with_stream(rng):
    for _ in range(50):
        v = rng.normal(size=3)
        fr = ff.flow_frame(v, rng.normal(size=3))
        assert np.allclose(fr.inertial_to_local @ (v / np.linalg.norm(v)), [0, 0, 1], atol=1e-12)


def test_degenerate_frame():
    with pytest.raises(ff.DegenerateFreestreamError):
        ff.flow_frame([0, 0, 0], [1, 0, 0])


def test_surface_tangency_random_frames(rng):
    for _ in range(200):
        body = FlowBody(rng.normal(size=3) * 5, rng.normal(size=3), radius=rng.uniform(0.5, 2), buffer=rng.uniform(0, 1))
        v_inf = rng.normal(size=3) * 2
        n = random_unit(rng)
        p = body.center + body.effective_radius * n
        sol = ff.induced_velocity(p, None, body, v_inf)
        rel = sol.velocity - body.velocity
        assert abs(rel @ n) <= 1e-10 * np.linalg.norm(v_inf - body.velocity)


def test_equator_speed_is_one_and_a_half(rng):
    for _ in range(20):
        body = FlowBody(np.zeros(3), radius=1.0, buffer=rng.uniform(0, 2))
        v_inf = rng.normal(size=3)
        e = v_inf / np.linalg.norm(v_inf)
        n = np.cross(e, random_unit(rng))
        n /= np.linalg.norm(n)
        v = ff.induced_velocity(body.effective_radius * n, None, body, v_inf).velocity
        assert abs(np.linalg.norm(v) - 1.5 * np.linalg.norm(v_inf)) <= 1e-9 * np.linalg.norm(v_inf)


def test_far_field_recovers_freestream():
    body = FlowBody([0, 0, 0], [0.3, 0, 0], radius=1.0, buffer=1.0)
    v_inf = np.array([1.0, 0.5, 0.0])
    v = ff.induced_velocity([1e4, 2e4, 0], None, body, v_inf).velocity
    assert np.allclose(v, v_inf, atol=1e-9)


def test_stagnation_point_moves_with_body():
    body = FlowBody([0, 0, 0], [0.0, -0.75, 0.0], radius=1.0, buffer=1.0)
    v_inf = np.array([0.0, 1.0, 0.0])
    # upstream pole relative to the relative stream (+y)
    v = ff.induced_velocity([0, -2.0, 0], None, body, v_inf).velocity
    assert np.allclose(v, body.velocity, atol=1e-12)


def test_inside_raises_or_projects():
    body = FlowBody([0, 0, 0], radius=1.0, buffer=1.0)
    with pytest.raises(ff.InsideBodyError):
        ff.induced_velocity([0.5, 0, 0], None, body, [1, 0, 0])
    sol = ff.induced_velocity([0, 0.5, 0], None, body, [1, 0, 0], project_inside=True)
    assert sol.inside
    assert np.all(np.isfinite(sol.velocity))
    # the projected point sits on the equator: 1.5x speed, no radial part
    assert np.linalg.norm(sol.velocity) == pytest.approx(1.5, rel=1e-5)
    center = ff.induced_velocity([0, 0, 0], None, body, [1, 0, 0], project_inside=True)
    assert center.inside and np.allclose(center.velocity, 0, atol=1e-5)


def test_surface_point_is_not_inside():
    body = FlowBody([0, 0, 0], radius=1.0, buffer=1.0)
    sol = ff.induced_velocity([0, 2.0, 0], None, body, [1, 0, 0])
    assert not sol.inside


def test_degenerate_freestream_returns_freestream():
    body = FlowBody([0, 0, 0], [1, 2, 3], radius=1.0)
    sol = ff.induced_velocity([3, 0, 0], None, body, [1, 2, 3])
    assert np.array_equal(sol.velocity, [1, 2, 3])


def test_agent_velocity_is_default_freestream():
    body = FlowBody([0, 0, 0], radius=1.0)
    a = ff.induced_velocity([3, 1, 0], [1, 0, 0], body).velocity
    b = ff.induced_velocity([3, 1, 0], None, body, [1, 0, 0]).velocity
    assert np.array_equal(a, b)


def test_body_validation():
    with pytest.raises(ValueError):
        FlowBody([0, 0, 0], radius=0.0)
    with pytest.raises(ValueError):
        FlowBody([0, 0, 0], buffer=-1.0)
    with pytest.raises(ValueError):
        FlowBody([0, 0, 0], kind="cube")
    with pytest.raises(ValueError):
        FlowBody([0, 0], radius=1.0)


@settings(max_examples=200, deadline=None)
@given(
    st.floats(0.2, 5), st.floats(0, 3), st.floats(0.01, 20), st.floats(0, math.pi),
)
def test_radial_velocity_vanishes_on_surface(R_d, eps, speed, theta):
    frame = ff.FlowFrame(0.0, 0.0, np.eye(3), np.eye(3), theta, 0.0, R_d + eps)
    v = ff.combined_flow_spherical(frame, speed, ff.doublet_strength(R_d + eps, speed))
    assert abs(v[0]) <= 1e-10 * speed


# --------------------------------------------------------------------------
# superposition


def test_sequential_order_nearest_first():
    a = FlowBody([3.0, 0.5, 0], radius=1.0)
    b = FlowBody([-2.5, 0, 0.3], radius=0.5)
    p = np.array([0.2, 0.1, 0.0])
    v_inf = np.array([1.0, 0.2, 0.0])
    # b is nearer, so it sees the raw freestream
    step1 = ff.induced_velocity(p, None, b, v_inf).velocity
    expected = ff.induced_velocity(p, None, a, step1).velocity
    for order in ([a, b], [b, a]):
        assert np.array_equal(ff.superpose(p, None, order, v_inf), expected)


def test_tie_goes_to_lower_index():
    a = FlowBody([2.0, 0, 0], radius=0.5)
    b = FlowBody([-2.0, 0, 0], radius=0.7)
    p = np.zeros(3)
    v_inf = np.array([0.3, 1.0, 0.1])
    first = ff.induced_velocity(p, None, a, v_inf).velocity
    expected = ff.induced_velocity(p, None, b, first).velocity
    assert np.array_equal(ff.superpose(p, None, [a, b], v_inf), expected)


def test_additive_mode_sums_perturbations():
    a = FlowBody([3.0, 0.5, 0], radius=1.0)
    b = FlowBody([-2.5, 0, 0.3], radius=0.5)
    p = np.array([0.2, 0.1, 0.0])
    v_inf = np.array([1.0, 0.2, 0.0])
    pa = ff.induced_velocity(p, None, a, v_inf).velocity - v_inf
    pb = ff.induced_velocity(p, None, b, v_inf).velocity - v_inf
    v, hits = ff.superpose_detailed(p, None, [a, b], v_inf, mode="additive")
    assert np.allclose(v, v_inf + pa + pb, atol=1e-15) and hits == 0
    with pytest.raises(ValueError):
        ff.superpose(p, None, [a], v_inf, mode="bogus")


def test_superpose_no_bodies_is_identity():
    assert np.array_equal(ff.superpose([1, 2, 3], None, [], [0.5, 0, 0]), [0.5, 0, 0])


def test_avoidance_force():
    assert np.allclose(ff.avoidance_force([1, 0, 0], [0, 1, 0], 0.3), [0.3, -0.3, 0])
    with pytest.raises(ValueError):
        ff.avoidance_force([1, 0, 0], [0, 1, 0], -1)


# --------------------------------------------------------------------------
# Rankine body


def test_rankine_source_upstream():
    body = FlowBody([1, 2, 3], [0.5, 0, 0], kind="rankine", separation=2.0, strength=3.0)
    source, sink, axis = ff.rankine_points(body, [2.5, 0, 0])
    assert np.allclose(axis, [1, 0, 0])
    assert np.allclose(source, [0, 2, 3]) and np.allclose(sink, [2, 2, 3])


def test_rankine_matches_source_sink_superposition(rng):
    body = FlowBody([0, 0, 0], kind="rankine", separation=1.0, strength=2.0)
    v_inf = np.array([0.0, 0.0, 1.5])
    for _ in range(20):
        p = random_unit(rng) * rng.uniform(2, 5)
        h = 1e-5

        def phi(x):
            return 1.5 * x[2] - 2.0 / (4 * math.pi * np.linalg.norm(x - [0, 0, -0.5])) + 2.0 / (
                4 * math.pi * np.linalg.norm(x - [0, 0, 0.5]))

        grad = np.array([(phi(p + h * e) - phi(p - h * e)) / (2 * h) for e in np.eye(3)])
        assert np.allclose(ff.rankine_velocity(p, body, v_inf), grad, atol=1e-8)


def test_rankine_front_stagnation():
    # stagnation on the axis where the source outflow cancels the stream
    lam, ell, U = 4.0, 1.0, 1.0
    body = FlowBody([0, 0, 0], kind="rankine", separation=ell, strength=lam)
    # solve U = lam/(4 pi) (1/(x-a)^2 - 1/(x+a)^2) for x < -a on the upstream axis
    from scipy.optimize import brentq

    a = ell / 2
    f = lambda s: U - lam / (4 * math.pi) * (1 / (s - a) ** 2 - 1 / (s + a) ** 2)
    s = brentq(f, a + 1e-6, 50)
    v = ff.rankine_velocity([0, 0, -s], body, [0, 0, U])
    assert np.linalg.norm(v) < 1e-9


def test_rankine_dispatch_from_induced():
    body = FlowBody([0, 0, 0], kind="rankine", separation=1.0, strength=2.0)
    a = ff.induced_velocity([3, 0, 1], None, body, [1, 0, 0]).velocity
    assert np.allclose(a, ff.rankine_velocity([3, 0, 1], body, [1, 0, 0]))


# --------------------------------------------------------------------------
# grid sampling


def test_grid_points_order_and_validation():
    pts = ff.grid_points([0, 1, 0, 2, 0, 0], [2, 3, 1])
    assert pts.shape == (6, 3)
    assert np.array_equal(pts[0], [0, 0, 0]) and np.array_equal(pts[1], [0, 1, 0])
    with pytest.raises(ValueError):
        ff.grid_points([0, 1, 0, 1, 0], [2, 2, 2])
    with pytest.raises(ValueError):
        ff.grid_points([1, 0, 0, 1, 0, 1], [2, 2, 2])


def test_sample_field_axisymmetric(rng):
    body = FlowBody([0, 0, 0], radius=1.0, buffer=0.5)
    v_inf = np.array([0, 0, 2.0])
    pts = ff.grid_points([-3, 3, -3, 3, -3, 3], [7, 7, 7])
    rows = ff.sample_field(pts, [body], v_inf)
    R = np.array([[0, -1, 0], [1, 0, 0], [0, 0, 1.0]])  # quarter turn about the stream axis
    lookup = {tuple(np.round(p, 9)): v for p, v in rows}
    for p, v in rows:
        q = tuple(np.round(R @ p, 9))
        if v is None:
            assert lookup[q] is None
        else:
            assert np.allclose(lookup[q], R @ v, atol=1e-9)


def test_sample_field_far_and_inside():
    body = FlowBody([0, 0, 0], radius=1.0, buffer=1.0)
    rows = ff.sample_field([[500, 0, 0], [0.1, 0, 0]], [body], [1, 0, 0])
    assert np.allclose(rows[0][1], [1, 0, 0], atol=1e-6)
    assert rows[1][1] is None


def test_sample_field_surface_adjacent(rng):
    body = FlowBody([0, 0, 0], radius=1.0, buffer=1.0)
    v_inf = np.array([0.4, -1.0, 0.2])
    for n in random_unit(rng, 50):
        p = n * body.effective_radius * (1 + 1e-12)
        v = ff.sample_field([p], [body], v_inf)[0][1]
        assert abs(v @ n) < 1e-6 * np.linalg.norm(v_inf)


def test_field_csv(tmp_path):
    rows = [(np.array([0.0, 1.0, 2.0]), np.array([1.0, 0.0, 0.0])), (np.zeros(3), None)]
    path = tmp_path / "f.csv"
    ff.write_field_csv(path, rows)
    lines = path.read_text().splitlines()
    assert lines[0] == "format_version=1"
    assert lines[1] == "x,y,z,vx,vy,vz,inside"
    assert lines[2] == "0.0,1.0,2.0,1.0,0.0,0.0,0"
    assert lines[3] == "0.0,0.0,0.0,,,,1"
