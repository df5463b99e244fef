import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hydrovrb import vehicle as vh

P = vh.QuadParams()


def state(pos=(0, 0, 0), vel=(0, 0, 0), euler=(0, 0, 0), rates=(0, 0, 0)):
    return np.concatenate([pos, vel, vh.quaternion_from_euler(*euler), rates]).astype(float)


def free_motion(backend, x, dt, n):
    """Thrust- and torque-free propagation through the kernel (all PID gains zero)."""
    gains = np.zeros(24)
    gains[20] = gains[21] = gains[22] = 1.0
    A = vh.allocation_matrix(P)
    out = np.zeros(8)
    x = x.copy()
    backend.quad_advance(x, np.zeros(13), np.zeros(3), np.zeros(3),
                         np.array([P.mass, P.g, *P.inertia, P.max_rotor_speed]), gains,
                         np.linalg.inv(A).reshape(-1).copy(), A.reshape(-1).copy(), dt, n, out)
    return x


def test_hover_rotor_speeds():
    cmd = vh.allocate_rotors(P.mass * P.g, np.zeros(3), P)
    w = cmd.omega
    expected = math.sqrt(P.mass * P.g / (4 * P.k_thrust))
    assert np.allclose(w, w[0], rtol=1e-12)
    assert abs(w[0] - 4108.0) <= 0.001 * 4108.0
    assert w[0] == pytest.approx(expected, rel=1e-12)
    assert not cmd.saturated.any()


def test_allocation_roundtrip(rng):
    A = vh.allocation_matrix(P)
    for _ in range(20):
        w2 = rng.uniform(1e6, 3e7, size=4)
        T, *tau = A @ w2
        assert np.allclose(vh.allocate_rotors(T, tau, P).omega_sq, w2, rtol=1e-9)


def test_allocation_signs():
    A = vh.allocation_matrix(P)
    # rotor 1 at +45 deg (front-left): positive x and y arm
    w2 = np.array([1.0, 0, 0, 0])
    T, tx, ty, tz = A @ w2
    assert tx > 0 and ty < 0 and tz > 0


def test_allocation_saturation():
    cmd = vh.allocate_rotors(100.0, [0, 0, 0], P)
    assert cmd.saturated.all() and np.allclose(cmd.omega, P.max_rotor_speed)
    cmd = vh.allocate_rotors(1.0, [0.5, 0, 0], P)
    assert cmd.saturated.any() and (cmd.omega_sq >= 0).all()


def test_params_validation():
    with pytest.raises(ValueError):
        vh.QuadParams(mass=0)


def test_dcm_is_rotation(rng):
    for q in rng.normal(size=(20, 4)):
        T = vh.dcm_from_quaternion(q / np.linalg.norm(q))
        assert np.allclose(T @ T.T, np.eye(3), atol=1e-12)
        assert np.linalg.det(T) == pytest.approx(1.0)


def test_dcm_normalises_with_warning(caplog):
    T = vh.dcm_from_quaternion([2.0, 0, 0, 0])
    assert np.allclose(T, np.eye(3))
    assert "non-unit" in caplog.text


def test_dcm_yaw_convention():
    T = vh.dcm_from_quaternion(vh.quaternion_from_euler(0, 0, math.pi / 2))
    # inertial +y is the body +x axis after a 90 degree yaw
    assert np.allclose(T @ [0, 1, 0], [1, 0, 0], atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.floats(-1.5, 1.5), st.floats(-1.5, 1.5), st.floats(-3.1, 3.1))
def test_euler_roundtrip(phi, theta, psi):
    T = vh.dcm_from_quaternion(vh.quaternion_from_euler(phi, theta, psi))
    assert np.allclose(vh.euler_from_dcm(T), (phi, theta, psi), atol=1e-9)


def test_euler_matches_composed_rotations(rng):
    def rx(a):
        return np.array([[1, 0, 0], [0, math.cos(a), math.sin(a)], [0, -math.sin(a), math.cos(a)]])

    def ry(a):
        return np.array([[math.cos(a), 0, -math.sin(a)], [0, 1, 0], [math.sin(a), 0, math.cos(a)]])

    def rz(a):
        return np.array([[math.cos(a), math.sin(a), 0], [-math.sin(a), math.cos(a), 0], [0, 0, 1]])

    for phi, theta, psi in rng.uniform(-1, 1, size=(20, 3)):
        T = vh.dcm_from_quaternion(vh.quaternion_from_euler(phi, theta, psi))
        assert np.allclose(T, rx(phi) @ ry(theta) @ rz(psi), atol=1e-12)


def test_gimbal_lock_guard(caplog):
    T = vh.dcm_from_quaternion(vh.quaternion_from_euler(0.0, math.pi / 2, 0.3))
    phi, theta, psi = vh.euler_from_dcm(T)
    assert phi == 0.0 and theta == pytest.approx(math.pi / 2)
    assert "gimbal" in caplog.text


def test_quaternion_rate_matches_finite_difference(rng):
    w = rng.normal(size=3)
    q = vh.quaternion_from_euler(0.2, -0.3, 0.5)
    h = 1e-6
    # q(t+h) = q (x) exp(w h / 2)
    ang = np.linalg.norm(w) * h
    dq = np.concatenate([[math.cos(ang / 2)], math.sin(ang / 2) * w / np.linalg.norm(w)])
    q0, q1, q2, q3 = q
    L = np.array([[q0, -q1, -q2, -q3], [q1, q0, -q3, q2], [q2, q3, q0, -q1], [q3, -q2, q1, q0]])
    assert np.allclose(0.5 * vh.quat_rate_matrix(w) @ q, (L @ dq - q) / h, atol=1e-5)


def test_free_fall_closed_form():
    x = state(pos=(0, 0, 10))
    for _ in range(100):
        x = vh.rk4_step(x, 0.0, np.zeros(3), P, 0.01)
    assert abs(x[5] + P.g) <= 1e-6
    assert x[2] == pytest.approx(10 - 0.5 * P.g, abs=1e-9)


def test_free_fall_kernel(backend):
    x = free_motion(backend, state(pos=(0, 0, 10), euler=(0.3, -0.2, 1.0)), 1e-3, 1000)
    v = vh.dcm_from_quaternion(x[6:10]).T @ x[3:6]
    assert np.allclose(v, [0, 0, -P.g], atol=1e-6)


def test_hover_equilibrium():
    x = state(pos=(1, 2, 3))
    x1 = vh.rk4_step(x, P.mass * P.g, np.zeros(3), P, 0.01)
    assert np.allclose(x1, x, atol=1e-15)


def test_torque_free_angular_momentum(backend):
    x = state(euler=(0.1, 0.2, 0.3), rates=(1.0, -2.0, 3.0))
    I = np.diag(P.inertia)

    def momentum(x):
        return vh.dcm_from_quaternion(x[6:10]).T @ (I @ x[10:13])

    L0 = momentum(x)
    x = free_motion(backend, x, 1e-4, 100_000)
    assert np.max(np.abs(momentum(x) - L0)) <= 1e-6
    # kinetic energy as well
    assert 0.5 * x[10:13] @ I @ x[10:13] == pytest.approx(0.5 * np.array([1.0, -2.0, 3.0]) @ I @ [1.0, -2.0, 3.0], rel=1e-8)


def test_quaternion_norm_drift():
    x = state(rates=(1.0, -2.0, 3.0))
    y = x.copy()
    for _ in range(2000):
        x = vh.rk4_step(x, 0.0, np.zeros(3), P, 0.005, normalize=False)
        y = vh.rk4_step(y, 0.0, np.zeros(3), P, 0.005)
    assert abs(np.linalg.norm(x[6:10]) - 1) < 1e-6
    assert abs(np.linalg.norm(y[6:10]) - 1) < 1e-14


def test_kernel_derivative_matches_reference(backend, rng):
    for _ in range(10):
        q = rng.normal(size=4)
        x = np.concatenate([rng.normal(size=6), q / np.linalg.norm(q), rng.normal(size=3)])
        tau = rng.normal(size=3) * 0.1
        out = np.zeros(13)
        backend.quad_derivative(x, 9.0, tau, np.array([P.mass, P.g, *P.inertia]), out)
        assert np.allclose(out, vh.dynamics_derivative(x, 9.0, tau, P), atol=1e-13)


# --------------------------------------------------------------------------
# thrust and attitude extraction


def test_hover_command():
    T, theta, phi = vh.thrust_attitude_from_force([0, 0, P.g], (0, 0, 0), 0.0, P)
    assert T == pytest.approx(P.mass * P.g) and theta == 0 and phi == 0


def test_zero_command_holds_previous():
    T, theta, phi = vh.thrust_attitude_from_force([0, 0, 0], (0, 0, 0), 0.0, P, previous=(0.1, -0.2))
    assert (theta, phi) == (0.1, -0.2)


@settings(max_examples=100, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(3, 15), st.floats(-3, 3))
def test_commanded_attitude_points_thrust_along_force(ux, uy, uz, psi):
    u = np.array([ux, uy, uz])
    _, theta, phi = vh.thrust_attitude_from_force(u, (0, 0, psi), psi, P)
    T = vh.dcm_from_quaternion(vh.quaternion_from_euler(phi, theta, psi))
    body_z = T.T @ [0, 0, 1]
    assert np.allclose(body_z, u / np.linalg.norm(u), atol=1e-9)


def test_thrust_projects_on_body_axis():
    euler = (0.1, 0.2, 0.3)
    T_ib = vh.dcm_from_quaternion(vh.quaternion_from_euler(*euler))
    u = np.array([1.0, -2.0, 9.0])
    thrust, _, _ = vh.thrust_attitude_from_force(u, euler, 0.0, P)
    assert thrust == pytest.approx(P.mass * u @ (T_ib.T @ [0, 0, 1]))


# --------------------------------------------------------------------------
# PID


def closed_loop(commands, seconds=2.0, dt=1e-3, x=None):
    pid = vh.CascadedPID()
    x = state() if x is None else x
    A = vh.allocation_matrix(P)
    hist = []
    for _ in range(int(seconds / dt)):
        euler = vh.euler_from_dcm(vh.dcm_from_quaternion(x[6:10]))
        tau = pid.step(euler, x[10:13], commands, dt)
        cmd = vh.allocate_rotors(P.mass * P.g, tau, P, A)
        T, *tq = A @ cmd.omega_sq
        x = vh.rk4_step(x, T, tq, P, dt)
        hist.append(vh.euler_from_dcm(vh.dcm_from_quaternion(x[6:10])))
    return np.array(hist)


@pytest.mark.parametrize("axis", [0, 1, 2])
def test_attitude_step_response(axis):
    cmd = np.zeros(3)
    cmd[axis] = 0.1
    h = closed_loop(cmd)
    assert abs(h[-1, axis] - 0.1) < 0.002
    assert h[:, axis].max() < 0.11
    settled = np.nonzero(np.abs(h[:, axis] - 0.1) > 0.005)[0]
    assert settled[-1] * 1e-3 < 1.0


def test_pid_derivative_zero_on_first_call():
    g = vh.PIDGains(att_kd=(1.0, 1.0, 1.0), rate_kd=(1.0, 1.0, 1.0))
    pid = vh.CascadedPID(g)
    a = pid.step((0, 0, 0), (0, 0, 0), (0.1, 0, 0), 0.01)
    pid.reset()
    g0 = vh.PIDGains(att_kd=(0.0, 0.0, 0.0), rate_kd=(0.0, 0.0, 0.0))
    b = vh.CascadedPID(g0).step((0, 0, 0), (0, 0, 0), (0.1, 0, 0), 0.01)
    assert np.allclose(a, b)
    with pytest.raises(ValueError):
        pid.step((0, 0, 0), (0, 0, 0), (0, 0, 0), 0.0)


def test_pid_limits():
    pid = vh.CascadedPID()
    tau = pid.step((0, 0, 0), (0, 0, 0), (3.0, -3.0, 3.0), 0.001)
    assert abs(tau[0]) <= 1.0 and abs(tau[1]) <= 1.0 and abs(tau[2]) <= 0.1
    for _ in range(10000):
        pid.step((0, 0, 0), (0, 0, 0), (3.0, -3.0, 3.0), 0.001)
    assert np.all(np.abs(pid.state[0:6]) <= 0.5)


def test_yaw_error_wraps():
    pid = vh.CascadedPID()
    a = pid.step((0, 0, 3.1), (0, 0, 0), (0, 0, -3.1), 0.01)
    # shortest way is +0.083 rad, not -6.2
    assert a[2] > 0


def test_kernel_matches_reference_loop(backend):
    """Inner loop in the kernel equals PID + allocation + RK4 from this module."""
    x = state(pos=(0, 0, 5), vel=(0.5, -0.2, 0.1), euler=(0.05, -0.1, 0.4), rates=(0.1, 0.2, -0.1))
    u = np.array([0.8, -0.5, 10.2])
    att = np.array([0.1, -0.05, 0.6])
    dt, n = 1e-3, 200
    A = vh.allocation_matrix(P)
    pid = vh.CascadedPID()
    ref = x.copy()
    n_sat = 0
    for _ in range(n):
        T_ib = vh.dcm_from_quaternion(ref[6:10])
        euler = vh.euler_from_dcm(T_ib)
        thrust = max(0.0, P.mass * u @ T_ib[2])
        tau = pid.step(euler, ref[10:13], att, dt)
        cmd = vh.allocate_rotors(thrust, tau, P, A)
        n_sat += bool(cmd.saturated.any())
        Tw, *tq = A @ cmd.omega_sq
        ref = vh.rk4_step(ref, Tw, tq, P, dt)

    got = x.copy()
    pid_state = np.zeros(13)
    out = np.zeros(8)
    sat = backend.quad_advance(got, pid_state, u, att, np.array([P.mass, P.g, *P.inertia, P.max_rotor_speed]),
                               vh.PIDGains().as_array(), np.linalg.inv(A).reshape(-1).copy(),
                               A.reshape(-1).copy(), dt, n, out)
    assert np.allclose(got, ref, atol=1e-10)
    assert np.allclose(pid_state, pid.state, atol=1e-10)
    assert sat == n_sat
