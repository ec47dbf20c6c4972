"""Compiled inner loops for the coupled-resonator integrators.

State layout is ``y = [x_t, v_t, x_d, v_d]``. Forces on each mode are

    f_t = c(t) * (x_d - s * x_t) + F_dr cos(w_dr t) + xi_t
    f_d = c(t) * (x_t - s * x_d) + xi_d

with ``c(t) = 2 eta cos(w_pu t)`` and ``s`` = 1 for the full pump term, 0 when
the non-resonant self-modulation terms are dropped. Noise forces are held
constant over a step.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def _couple(c, xt, xd, self_terms):
    return c * (xd - self_terms * xt), c * (xt - self_terms * xd)


@njit(cache=True, nogil=True)
def etd_chunk(
    y, step0, nsteps, dt,
    phi_t, g0_t, g1_t, phi_d, g0_d, g1_d,
    eta, w_pu, self_terms, f_dr, w_dr,
    xi_t, xi_d,
    stride, out_t, out_d, limit_t, limit_d,
):
    """Exponential predictor-corrector over ``nsteps`` steps.

    Free damped-oscillator evolution is exact (``phi``); external forces use a
    zero-order hold (``g0``) plus a first-order-hold correction (``g1``) built
    from the predicted end-of-step force. Returns -1, or the global index of
    the step where |x| exceeded its limit.
    """
    xt, vt, xd, vd = y[0], y[1], y[2], y[3]
    two_eta = 2.0 * eta
    t = step0 * dt
    c0 = two_eta * math.cos(w_pu * t)
    dr0 = f_dr * math.cos(w_dr * t)
    for i in range(nsteps):
        n = step0 + i
        t1 = (n + 1) * dt
        ut0, ud0 = _couple(c0, xt, xd, self_terms)
        ut0 += dr0
        at = ut0 + xi_t[i]
        ad = ud0 + xi_d[i]
        pxt = phi_t[0, 0] * xt + phi_t[0, 1] * vt + g0_t[0] * at
        pvt = phi_t[1, 0] * xt + phi_t[1, 1] * vt + g0_t[1] * at
        pxd = phi_d[0, 0] * xd + phi_d[0, 1] * vd + g0_d[0] * ad
        pvd = phi_d[1, 0] * xd + phi_d[1, 1] * vd + g0_d[1] * ad

        c1 = two_eta * math.cos(w_pu * t1)
        dr1 = f_dr * math.cos(w_dr * t1)
        ut1, ud1 = _couple(c1, pxt, pxd, self_terms)
        ut1 += dr1
        dut = ut1 - ut0
        dud = ud1 - ud0
        xt = pxt + g1_t[0] * dut
        vt = pvt + g1_t[1] * dut
        xd = pxd + g1_d[0] * dud
        vd = pvd + g1_d[1] * dud
        c0 = c1
        dr0 = dr1

        if (n + 1) % stride == 0:
            j = (n + 1) // stride
            out_t[j] = xt
            out_d[j] = xd
        if not (abs(xt) < limit_t and abs(xd) < limit_d):
            y[0], y[1], y[2], y[3] = xt, vt, xd, vd
            return n + 1
    y[0], y[1], y[2], y[3] = xt, vt, xd, vd
    return -1


@njit(cache=True, nogil=True)
def _accel(xt, vt, xd, vd, t, p, two_eta, w_pu, self_terms, f_dr, w_dr, ft, fd):
    # p = [k_t/m_t, g_t, 1/m_t, k_d/m_d, g_d, 1/m_d]
    c = two_eta * math.cos(w_pu * t)
    ut, ud = _couple(c, xt, xd, self_terms)
    ut += f_dr * math.cos(w_dr * t) + ft
    ud += fd
    at = -p[0] * xt - p[1] * vt + p[2] * ut
    ad = -p[3] * xd - p[4] * vd + p[5] * ud
    return at, ad


@njit(cache=True, nogil=True)
def heun_chunk(
    y, step0, nsteps, dt, p,
    eta, w_pu, self_terms, f_dr, w_dr,
    xi_t, xi_d,
    stride, out_t, out_d, limit_t, limit_d,
):
    """Plain stochastic Heun (additive noise, same increment in both stages)."""
    xt, vt, xd, vd = y[0], y[1], y[2], y[3]
    two_eta = 2.0 * eta
    for i in range(nsteps):
        n = step0 + i
        t0 = n * dt
        t1 = t0 + dt
        at0, ad0 = _accel(xt, vt, xd, vd, t0, p, two_eta, w_pu, self_terms, f_dr, w_dr,
                          xi_t[i], xi_d[i])
        pxt = xt + dt * vt
        pvt = vt + dt * at0
        pxd = xd + dt * vd
        pvd = vd + dt * ad0
        at1, ad1 = _accel(pxt, pvt, pxd, pvd, t1, p, two_eta, w_pu, self_terms, f_dr, w_dr,
                          xi_t[i], xi_d[i])
        xt = xt + 0.5 * dt * (vt + pvt)
        vt = vt + 0.5 * dt * (at0 + at1)
        xd = xd + 0.5 * dt * (vd + pvd)
        vd = vd + 0.5 * dt * (ad0 + ad1)

        if (n + 1) % stride == 0:
            j = (n + 1) // stride
            out_t[j] = xt
            out_d[j] = xd
        if not (abs(xt) < limit_t and abs(xd) < limit_d):
            y[0], y[1], y[2], y[3] = xt, vt, xd, vd
            return n + 1
    y[0], y[1], y[2], y[3] = xt, vt, xd, vd
    return -1


def warmup():
    """Trigger compilation with tiny inputs."""
    y = np.zeros(4)
    eye = np.eye(2)
    z = np.zeros(2)
    xi = np.zeros(2)
    out = np.zeros(3)
    etd_chunk(y, 0, 2, 1e-6, eye, z, z, eye, z, z, 0.0, 0.0, 1.0, 0.0, 0.0, xi, xi, 1,
              out, out, 1.0, 1.0)
    heun_chunk(y, 0, 2, 1e-6, np.ones(6), 0.0, 0.0, 1.0, 0.0, 0.0, xi, xi, 1, out, out,
               1.0, 1.0)
