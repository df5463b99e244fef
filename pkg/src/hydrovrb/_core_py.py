"""Pure-Python implementation of the hot kernels.

Mirrors ``_core.pyx`` statement for statement; used when the compiled
extension is unavailable or ``HYDROVRB_PURE_PYTHON=1``.
"""
from math import acos, asin, atan2, cos, pi, sin, sqrt

TWO_PI = 2.0 * pi


def _deriv(x, thrust, tx, ty, tz, m, g, ixx, iyy, izz, out):
    u, v, w = x[3], x[4], x[5]
    q0, q1, q2, q3 = x[6], x[7], x[8], x[9]
    p, q, r = x[10], x[11], x[12]
    n = sqrt(q0 * q0 + q1 * q1 + q2 * q2 + q3 * q3)
    a0, a1, a2, a3 = q0 / n, q1 / n, q2 / n, q3 / n
    t00 = a0 * a0 + a1 * a1 - a2 * a2 - a3 * a3
    t01 = 2.0 * (a1 * a2 + a0 * a3)
    t02 = 2.0 * (a1 * a3 - a0 * a2)
    t10 = 2.0 * (a1 * a2 - a0 * a3)
    t11 = a0 * a0 - a1 * a1 + a2 * a2 - a3 * a3
    t12 = 2.0 * (a2 * a3 + a0 * a1)
    t20 = 2.0 * (a1 * a3 + a0 * a2)
    t21 = 2.0 * (a2 * a3 - a0 * a1)
    t22 = a0 * a0 - a1 * a1 - a2 * a2 + a3 * a3
    out[0] = t00 * u + t10 * v + t20 * w
    out[1] = t01 * u + t11 * v + t21 * w
    out[2] = t02 * u + t12 * v + t22 * w
    out[3] = -(q * w - r * v) - g * t02
    out[4] = -(r * u - p * w) - g * t12
    out[5] = -(p * v - q * u) + thrust / m - g * t22
    out[6] = 0.5 * (-p * q1 - q * q2 - r * q3)
    out[7] = 0.5 * (p * q0 + r * q2 - q * q3)
    out[8] = 0.5 * (q * q0 - r * q1 + p * q3)
    out[9] = 0.5 * (r * q0 + q * q1 - p * q2)
    out[10] = (tx - (q * izz * r - r * iyy * q)) / ixx
    out[11] = (ty - (r * ixx * p - p * izz * r)) / iyy
    out[12] = (tz - (p * iyy * q - q * ixx * p)) / izz


def quad_derivative(state, thrust, torque, params, out):
    _deriv(state, thrust, torque[0], torque[1], torque[2],
           params[0], params[1], params[2], params[3], params[4], out)


def _clip(x, lo, hi):
    return lo if x < lo else (hi if x > hi else x)


def _wrap(a):
    return (a + pi) % TWO_PI - pi


def quad_advance(state, pid, u, att_cmd, params, gains, ainv, amat, dt, n_sub, out):
    """Advance one vehicle ``n_sub`` steps of ``dt``: PID, allocation, RK4.

    ``state`` (13) and ``pid`` (13) are updated in place; ``out`` receives
    the applied thrust, torques and rotor speeds of the last substep. Returns
    the number of substeps with rotor saturation.
    """
    m, g, ixx, iyy, izz, wmax = params[0], params[1], params[2], params[3], params[4], params[5]
    wmax2 = wmax * wmax
    ux, uy, uz = u[0], u[1], u[2]
    phic, thetac, psic = att_cmd[0], att_cmd[1], att_cmd[2]
    att_int_lim, rate_int_lim, max_rate = gains[18], gains[19], gains[20]
    tlim_xy, tlim_z = gains[21], gains[22]
    x = [float(v) for v in state]
    s = [float(v) for v in pid]
    k1 = [0.0] * 13
    k2 = [0.0] * 13
    k3 = [0.0] * 13
    k4 = [0.0] * 13
    xt = [0.0] * 13
    err = [0.0] * 3
    rcmd = [0.0] * 3
    rerr = [0.0] * 3
    tau = [0.0] * 3
    w2 = [0.0] * 4
    wrench = [0.0] * 4
    saturated = 0

    for _ in range(n_sub):
        q0, q1, q2, q3 = x[6], x[7], x[8], x[9]
        t00 = q0 * q0 + q1 * q1 - q2 * q2 - q3 * q3
        t01 = 2.0 * (q1 * q2 + q0 * q3)
        t02 = 2.0 * (q1 * q3 - q0 * q2)
        t11 = q0 * q0 - q1 * q1 + q2 * q2 - q3 * q3
        t12 = 2.0 * (q2 * q3 + q0 * q1)
        t20 = 2.0 * (q1 * q3 + q0 * q2)
        t21 = 2.0 * (q2 * q3 - q0 * q1)
        t22 = q0 * q0 - q1 * q1 - q2 * q2 + q3 * q3

        sth = _clip(-t02, -1.0, 1.0)
        theta = asin(sth)
        phi = atan2(t12, t22)
        psi = atan2(t01, t00)

        thrust = m * (ux * t20 + uy * t21 + uz * t22)
        if thrust < 0.0:
            thrust = 0.0

        first = s[12] == 0.0
        err[0] = phic - phi
        err[1] = thetac - theta
        err[2] = _wrap(psic - psi)
        for k in range(3):
            s[k] = _clip(s[k] + err[k] * dt, -att_int_lim, att_int_lim)
            d = 0.0 if first else (err[k] - s[6 + k]) / dt
            rc = gains[k] * err[k] + gains[3 + k] * s[k] + gains[6 + k] * d
            rcmd[k] = _clip(rc, -max_rate, max_rate)
        for k in range(3):
            rerr[k] = rcmd[k] - x[10 + k]
            s[3 + k] = _clip(s[3 + k] + rerr[k] * dt, -rate_int_lim, rate_int_lim)
            d = 0.0 if first else (rerr[k] - s[9 + k]) / dt
            tau[k] = gains[9 + k] * rerr[k] + gains[12 + k] * s[3 + k] + gains[15 + k] * d
        tau[0] = _clip(tau[0], -tlim_xy, tlim_xy)
        tau[1] = _clip(tau[1], -tlim_xy, tlim_xy)
        tau[2] = _clip(tau[2], -tlim_z, tlim_z)
        for k in range(3):
            s[6 + k] = err[k]
            s[9 + k] = rerr[k]
        s[12] = 1.0

        sat = False
        for i in range(4):
            val = ainv[4 * i] * thrust + ainv[4 * i + 1] * tau[0] + ainv[4 * i + 2] * tau[1] + ainv[4 * i + 3] * tau[2]
            if val < 0.0:
                val = 0.0
                sat = True
            elif val > wmax2:
                val = wmax2
                sat = True
            w2[i] = val
        if sat:
            saturated += 1
        for i in range(4):
            wrench[i] = amat[4 * i] * w2[0] + amat[4 * i + 1] * w2[1] + amat[4 * i + 2] * w2[2] + amat[4 * i + 3] * w2[3]

        T, tx, ty, tz = wrench
        _deriv(x, T, tx, ty, tz, m, g, ixx, iyy, izz, k1)
        for i in range(13):
            xt[i] = x[i] + 0.5 * dt * k1[i]
        _deriv(xt, T, tx, ty, tz, m, g, ixx, iyy, izz, k2)
        for i in range(13):
            xt[i] = x[i] + 0.5 * dt * k2[i]
        _deriv(xt, T, tx, ty, tz, m, g, ixx, iyy, izz, k3)
        for i in range(13):
            xt[i] = x[i] + dt * k3[i]
        _deriv(xt, T, tx, ty, tz, m, g, ixx, iyy, izz, k4)
        for i in range(13):
            x[i] = x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        n = sqrt(x[6] * x[6] + x[7] * x[7] + x[8] * x[8] + x[9] * x[9])
        for i in range(6, 10):
            x[i] = x[i] / n

    for i in range(13):
        state[i] = x[i]
    for i in range(13):
        pid[i] = s[i]
    out[0], out[1], out[2], out[3] = wrench
    for i in range(4):
        out[4 + i] = sqrt(w2[i])
    return saturated


def doublet_induced(pos, v_inf, center, v_obs, r_eff, out):
    """Single-doublet deflected velocity written to ``out``; returns 1 if the
    query was inside ``r_eff`` and had to be projected to the surface."""
    vrx = v_inf[0] - v_obs[0]
    vry = v_inf[1] - v_obs[1]
    vrz = v_inf[2] - v_obs[2]
    speed = sqrt(vrx * vrx + vry * vry + vrz * vrz)
    rx = pos[0] - center[0]
    ry = pos[1] - center[1]
    rz = pos[2] - center[2]
    dist = sqrt(rx * rx + ry * ry + rz * rz)
    inside = 0
    if dist < r_eff * (1.0 - 1e-12):
        inside = 1
        if dist == 0.0:
            if speed >= 1e-9:
                rx, ry, rz = -vrx / speed, -vry / speed, -vrz / speed
            else:
                rx, ry, rz = 0.0, 0.0, 1.0
        else:
            rx, ry, rz = rx / dist, ry / dist, rz / dist
        scale = r_eff * (1.0 + 1e-6)
        rx, ry, rz = rx * scale, ry * scale, rz * scale
        dist = sqrt(rx * rx + ry * ry + rz * rz)
    if speed < 1e-9:
        out[0], out[1], out[2] = v_inf[0], v_inf[1], v_inf[2]
        return inside

    el = acos(_clip(vrz / speed, -1.0, 1.0))
    az = atan2(vry, vrx)
    ce, se, ca, sa = cos(el), sin(el), cos(az), sin(az)
    # T_I^D = R_el @ R_az
    d00, d01, d02 = ce * ca, ce * sa, -se
    d10, d11, d12 = -sa, ca, 0.0
    d20, d21, d22 = se * ca, se * sa, ce
    lx = d00 * rx + d01 * ry + d02 * rz
    ly = d10 * rx + d11 * ry + d12 * rz
    lz = d20 * rx + d21 * ry + d22 * rz
    th = acos(_clip(lz / dist, -1.0, 1.0))
    ph = atan2(ly, lx)
    ct, st, cp, sp = cos(th), sin(th), cos(ph), sin(ph)

    mu = -TWO_PI * r_eff * r_eff * r_eff * speed
    r3 = dist * dist * dist
    vr = speed * ct + mu * ct / (TWO_PI * r3)
    vt = -speed * st + mu * st / (2.0 * TWO_PI * r3)
    # T_E^D @ (vr, vt, 0)
    ex = st * cp * vr + ct * cp * vt
    ey = st * sp * vr + ct * sp * vt
    ez = ct * vr - st * vt
    out[0] = v_obs[0] + d00 * ex + d10 * ey + d20 * ez
    out[1] = v_obs[1] + d01 * ex + d11 * ey + d21 * ez
    out[2] = v_obs[2] + d02 * ex + d12 * ey + d22 * ez
    return inside
