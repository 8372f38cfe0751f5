"""Compiled per-trajectory loops.

Every public solver that walks a time grid funnels through these functions so
that a trajectory computed through the single-path API and the same
trajectory computed inside an ensemble are bit-identical.
"""

import math

import numpy as np
from numba import njit


@njit(nogil=True, cache=True)
def fill_path(gen, sqrt_dt, increments, cumulative, sign=1.0):
    """Draw ``len(increments)`` N(0, dt) increments and their running sum.

    ``sign = -1`` yields the exactly mirrored path of the same stream.
    """
    w = 0.0
    cumulative[0] = 0.0
    for i in range(increments.size):
        dw = sign * (sqrt_dt * gen.standard_normal())
        increments[i] = dw
        w += dw
        cumulative[i + 1] = w


@njit(nogil=True, cache=True)
def tanh_tilde_array(cumulative, two_sqrt_gamma, out):
    for i in range(cumulative.size):
        out[i] = math.tanh(two_sqrt_gamma * cumulative[i])


@njit(nogil=True, cache=True)
def sde_integrate(T, dt, h, J, eps, rec, out_s, out_p):
    """Euler-Maruyama for the peak SDE driven pathwise by ``T = tanh(W~)``.

    ``rec`` holds sorted step indices at which (s, p) is written to the
    output slots. The reflecting clamp only engages when the singular
    ``h``-terms are present; at ``h == 0`` the update is a pure telescoping
    sum of ``T`` increments.
    """
    n = T.size - 1
    s = 0.0
    p = 0.0
    r = 0
    while r < rec.size and rec[r] == 0:
        out_s[r] = s
        out_p[r] = p
        r += 1
    lim = 0.5 - eps if h != 0.0 else 0.5
    for i in range(n):
        t = i * dt
        dT = T[i + 1] - T[i]
        if h != 0.0:
            q = math.sqrt(0.25 - s * s)
            s_new = s + 0.5 * dT - 2.0 * h * q * math.sin(p) * dt
            p = p + 2.0 * h * s / q * math.cos(p) * dt + 4.0 * J * t * dT + 8.0 * J * s * dt
        else:
            s_new = s + 0.5 * dT
            p = p + 4.0 * J * t * dT + 8.0 * J * s * dt
        if s_new > lim:
            s_new = lim
        elif s_new < -lim:
            s_new = -lim
        s = s_new
        while r < rec.size and rec[r] == i + 1:
            out_s[r] = s
            out_p[r] = p
            r += 1


@njit(nogil=True, cache=True)
def perturbative_integrals(x, T, dt, J, rec, out_is, out_ip):
    """Trapezoid integrals of the first-order correction, ``h`` factored out.

    With ``x = W~`` and ``T = tanh x``: ``sqrt(1 - T^2) = sech x`` and
    ``T / sqrt(1 - T^2) = T cosh x = sinh x``, which stay finite where
    ``1 - T^2`` underflows.
    """
    n = x.size - 1
    i_s = 0.0
    i_p = 0.0
    fs0 = 0.0
    fp0 = 0.0
    r = 0
    while r < rec.size and rec[r] == 0:
        out_is[r] = 0.0
        out_ip[r] = 0.0
        r += 1
    for i in range(n):
        tau = (i + 1) * dt
        ti = T[i + 1]
        c = math.cosh(x[i + 1])
        arg = 4.0 * J * tau * ti
        fs1 = math.sin(arg) / c
        fp1 = ti * c * math.cos(arg)
        i_s += 0.5 * dt * (fs0 + fs1)
        i_p += 0.5 * dt * (fp0 + fp1)
        fs0 = fs1
        fp0 = fp1
        while r < rec.size and rec[r] == i + 1:
            out_is[r] = i_s
            out_ip[r] = i_p
            r += 1


@njit(nogil=True, cache=True)
def ensemble_trajectory(gen, sign, method, sqrt_dt, dt, two_sqrt_gamma, hs, J,
                        eps, rec, out_s, out_p, out_aux, inc, cum, T):
    """One trajectory of the exact (0), sde (1) or perturbative (2) method.

    Writes ``out_s[k, r]``, ``out_p[k, r]`` for every field ``hs[k]`` and
    record index ``r``; all fields share one Brownian path. For the
    perturbative method ``out_aux`` receives the h-independent s-integral.
    ``inc``, ``cum`` and ``T`` are scratch buffers of sizes n, n+1, n+1.
    """
    fill_path(gen, sqrt_dt, inc, cum, sign)
    tanh_tilde_array(cum, two_sqrt_gamma, T)
    if method == 0:
        for r in range(rec.size):
            tr = T[rec[r]]
            for k in range(hs.size):
                out_s[k, r] = 0.5 * tr
                out_p[k, r] = 4.0 * J * (rec[r] * dt) * tr
    elif method == 1:
        for k in range(hs.size):
            sde_integrate(T, dt, hs[k], J, eps, rec, out_s[k], out_p[k])
    else:
        for i in range(cum.size):
            cum[i] = two_sqrt_gamma * cum[i]
        i_s = np.empty(rec.size)
        i_p = np.empty(rec.size)
        perturbative_integrals(cum, T, dt, J, rec, i_s, i_p)
        for r in range(rec.size):
            tr = T[rec[r]]
            out_aux[r] = i_s[r]
            for k in range(hs.size):
                out_s[k, r] = 0.5 * tr - hs[k] * i_s[r]
                out_p[k, r] = 4.0 * J * (rec[r] * dt) * tr + 2.0 * hs[k] * i_p[r]
