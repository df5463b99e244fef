# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: quadrotor inner loop and single-doublet flow.

Statement-for-statement twin of ``_core_py.py``.
"""
from libc.math cimport acos, asin, atan2, cos, sin, sqrt, fmod, M_PI

cdef double TWO_PI = 2.0 * M_PI


cdef inline double _clip(double x, double lo, double hi) nogil:
    if x < lo:
        return lo
    if x > hi:
        return hi
    return x


cdef inline double _wrap(double a) nogil:
    # Python-style modulo (result has the sign of the divisor)
    cdef double r = fmod(a + M_PI, TWO_PI)
    if r < 0.0:
        r += TWO_PI
    return r - M_PI


cdef void _deriv(double* x, double thrust, double tx, double ty, double tz,
                 double m, double g, double ixx, double iyy, double izz,
                 double* out) nogil:
    cdef double u = x[3], v = x[4], w = x[5]
    cdef double q0 = x[6], q1 = x[7], q2 = x[8], q3 = x[9]
    cdef double p = x[10], q = x[11], r = x[12]
    cdef double n = sqrt(q0 * q0 + q1 * q1 + q2 * q2 + q3 * q3)
    cdef double a0 = q0 / n, a1 = q1 / n, a2 = q2 / n, a3 = q3 / n
    cdef double t00 = a0 * a0 + a1 * a1 - a2 * a2 - a3 * a3
    cdef double t01 = 2.0 * (a1 * a2 + a0 * a3)
    cdef double t02 = 2.0 * (a1 * a3 - a0 * a2)
    cdef double t10 = 2.0 * (a1 * a2 - a0 * a3)
    cdef double t11 = a0 * a0 - a1 * a1 + a2 * a2 - a3 * a3
    cdef double t12 = 2.0 * (a2 * a3 + a0 * a1)
    cdef double t20 = 2.0 * (a1 * a3 + a0 * a2)
    cdef double t21 = 2.0 * (a2 * a3 - a0 * a1)
    cdef double t22 = a0 * a0 - a1 * a1 - a2 * a2 + a3 * a3
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


def quad_derivative(double[::1] state, double thrust, double[::1] torque,
                    double[::1] params, double[::1] out):
    _deriv(&state[0], thrust, torque[0], torque[1], torque[2],
           params[0], params[1], params[2], params[3], params[4], &out[0])


def quad_advance(double[::1] state, double[::1] pid, double[::1] u,
                 double[::1] att_cmd, double[::1] params, double[::1] gains,
                 double[::1] ainv, double[::1] amat, double dt, int n_sub,
                 double[::1] out):
    cdef double m = params[0], g = params[1], ixx = params[2]
    cdef double iyy = params[3], izz = params[4], wmax = params[5]
    cdef double wmax2 = wmax * wmax
    cdef double ux = u[0], uy = u[1], uz = u[2]
    cdef double phic = att_cmd[0], thetac = att_cmd[1], psic = att_cmd[2]
    cdef double att_int_lim = gains[18], rate_int_lim = gains[19], max_rate = gains[20]
    cdef double tlim_xy = gains[21], tlim_z = gains[22]
    cdef double x[13]
    cdef double s[13]
    cdef double k1[13]
    cdef double k2[13]
    cdef double k3[13]
    cdef double k4[13]
    cdef double xt[13]
    cdef double err[3]
    cdef double rcmd[3]
    cdef double rerr[3]
    cdef double tau[3]
    cdef double w2[4]
    cdef double wrench[4]
    cdef int saturated = 0
    cdef int step, i, k
    cdef bint first, sat
    cdef double q0, q1, q2, q3, t00, t01, t02, t11, t12, t20, t21, t22
    cdef double sth, theta, phi, psi, thrust, d, rc, val, n
    cdef double T, tx, ty, tz

    for i in range(13):
        x[i] = state[i]
        s[i] = pid[i]
    for i in range(4):
        w2[i] = 0.0
        wrench[i] = 0.0

    with nogil:
        for step in range(n_sub):
            q0 = x[6]; q1 = x[7]; q2 = x[8]; q3 = x[9]
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

            T = wrench[0]; tx = wrench[1]; ty = wrench[2]; tz = wrench[3]
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
        pid[i] = s[i]
    for i in range(4):
        out[i] = wrench[i]
        out[4 + i] = sqrt(w2[i])
    return saturated


def doublet_induced(double[::1] pos, double[::1] v_inf, double[::1] center,
                    double[::1] v_obs, double r_eff, double[::1] out):
    cdef double vrx = v_inf[0] - v_obs[0]
    cdef double vry = v_inf[1] - v_obs[1]
    cdef double vrz = v_inf[2] - v_obs[2]
    cdef double speed = sqrt(vrx * vrx + vry * vry + vrz * vrz)
    cdef double rx = pos[0] - center[0]
    cdef double ry = pos[1] - center[1]
    cdef double rz = pos[2] - center[2]
    cdef double dist = sqrt(rx * rx + ry * ry + rz * rz)
    cdef int inside = 0
    cdef double scale, el, az, ce, se, ca, sa
    cdef double d00, d01, d02, d10, d11, d12, d20, d21, d22
    cdef double lx, ly, lz, th, ph, ct, st, cp, sp, mu, r3, vr, vt, ex, ey, ez
    if dist < r_eff * (1.0 - 1e-12):
        inside = 1
        if dist == 0.0:
            if speed >= 1e-9:
                rx = -vrx / speed; ry = -vry / speed; rz = -vrz / speed
            else:
                rx = 0.0; ry = 0.0; rz = 1.0
        else:
            rx = rx / dist; ry = ry / dist; rz = rz / dist
        scale = r_eff * (1.0 + 1e-6)
        rx = rx * scale; ry = ry * scale; rz = rz * scale
        dist = sqrt(rx * rx + ry * ry + rz * rz)
    if speed < 1e-9:
        out[0] = v_inf[0]; out[1] = v_inf[1]; out[2] = v_inf[2]
        return inside

    el = acos(_clip(vrz / speed, -1.0, 1.0))
    az = atan2(vry, vrx)
    ce = cos(el); se = sin(el); ca = cos(az); sa = sin(az)
    d00 = ce * ca; d01 = ce * sa; d02 = -se
    d10 = -sa; d11 = ca; d12 = 0.0
    d20 = se * ca; d21 = se * sa; d22 = ce
    lx = d00 * rx + d01 * ry + d02 * rz
    ly = d10 * rx + d11 * ry + d12 * rz
    lz = d20 * rx + d21 * ry + d22 * rz
    th = acos(_clip(lz / dist, -1.0, 1.0))
    ph = atan2(ly, lx)
    ct = cos(th); st = sin(th); cp = cos(ph); sp = sin(ph)

    mu = -TWO_PI * r_eff * r_eff * r_eff * speed
    r3 = dist * dist * dist
    vr = speed * ct + mu * ct / (TWO_PI * r3)
    vt = -speed * st + mu * st / (2.0 * TWO_PI * r3)
    ex = st * cp * vr + ct * cp * vt
    ey = st * sp * vr + ct * sp * vt
    ez = ct * vr - st * vt
    out[0] = v_obs[0] + d00 * ex + d10 * ey + d20 * ez
    out[1] = v_obs[1] + d01 * ex + d11 * ey + d21 * ez
    out[2] = v_obs[2] + d02 * ex + d12 * ey + d22 * ez
    return inside
