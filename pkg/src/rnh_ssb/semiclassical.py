"""Stochastic semiclassical equations for the wave-packet peak.

The peak ``s`` and the classical momentum ``p`` (slope of the phase at the
peak) obey

    ds = d(tanh(W~)/2) - f(s) sin(p) dt
    dp = 2 h s (1/4 - s^2)^(-1/2) cos(p) dt + 4 J t d(tanh W~) + 8 J s dt

with ``f(s) = 2 h sqrt(1/4 - s^2)`` and ``W~ = 2 sqrt(gamma) W``. The noise
enters only through the pathwise increment of ``tanh(W~)``, which makes the
process non-Markovian.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DomainError
from .params import ModelParams
from .stochastic import WienerPath

EPS_CLAMP = 1e-9


@dataclass(frozen=True)
class PhasePoint:
    s_bar: float
    p_bar: float
    unphysical: bool = False

    def negated(self) -> "PhasePoint":
        return PhasePoint(-self.s_bar, -self.p_bar, self.unphysical)


@dataclass(frozen=True)
class TaylorCoefficients:
    g2: float
    g3: float
    theta2: float
    theta3: float


def ftilde(h: float, s_bar: float) -> float:
    if abs(s_bar) >= 0.5:
        raise DomainError("ftilde needs |s| < 1/2")
    return 2.0 * h * math.sqrt(0.25 - s_bar * s_bar)


def ftilde_taylor(h: float, s_bar: float) -> tuple[float, float, float]:
    """Value, first and second derivative of ``f`` at ``s_bar``."""
    if abs(s_bar) >= 0.5:
        raise DomainError("ftilde needs |s| < 1/2")
    q = math.sqrt(0.25 - s_bar * s_bar)
    return 2.0 * h * q, -2.0 * h * s_bar / q, -0.5 * h / q**3


def taylor_coefficients_h0(gamma: float, J: float, t: float, W_t: float) -> TaylorCoefficients:
    """Second/third s-derivatives of ``g`` and ``theta`` at the peak of the h = 0 solution.

    ``1 - tanh^2`` is evaluated as ``sech^2`` so the coefficients stay finite
    (if large) when ``tanh`` saturates.
    """
    x = 2.0 * math.sqrt(gamma) * W_t
    th = math.tanh(x)
    if abs(x) > 350:
        g2 = math.inf
        g3 = math.copysign(math.inf, x)
    else:
        c2 = math.cosh(x) ** 2  # 1 / (1 - tanh^2)
        g2 = 2.0 * c2
        g3 = 8.0 * th * c2 * c2
    return TaylorCoefficients(g2, g3, 8.0 * J * t, 0.0)


def sde_step(pt: PhasePoint, params: ModelParams, t: float, d_tanh: float, dt: float,
             eps: float = EPS_CLAMP) -> PhasePoint:
    """One Euler-Maruyama step; ``d_tanh`` is the path's ``tanh(W~)`` increment.

    ``|s|`` is clamped to ``1/2 - eps`` where the ``(1/4 - s^2)^(-1/2)``
    coefficient is active (``h != 0``).
    """
    s, p = pt.s_bar, pt.p_bar
    h, J = params.h, params.J
    if abs(s) >= 0.5 and h != 0.0:
        raise DomainError("sde_step needs |s| < 1/2")
    if h != 0.0:
        q = math.sqrt(0.25 - s * s)
        s_new = s + 0.5 * d_tanh - 2.0 * h * q * math.sin(p) * dt
        p_new = p + 2.0 * h * s / q * math.cos(p) * dt + 4.0 * J * t * d_tanh + 8.0 * J * s * dt
        lim = 0.5 - eps
    else:
        s_new = s + 0.5 * d_tanh
        p_new = p + 4.0 * J * t * d_tanh + 8.0 * J * s * dt
        lim = 0.5
    s_new = min(lim, max(-lim, s_new))
    return PhasePoint(s_new, p_new)


def integrate_sde(params: ModelParams, path: WienerPath, record_times,
                  eps: float = EPS_CLAMP) -> list[tuple[float, PhasePoint]]:
    """Integrate from ``(s, p) = (0, 0)`` along ``path``; record at ``record_times``."""
    rec = np.array(sorted(set(path.grid.indices_of(list(record_times)))), dtype=np.int64)
    if path.grid.n_steps == 0 and rec.size == 0:
        rec = np.zeros(1, dtype=np.int64)
    T = path.tanh_tilde(params.gamma)
    out_s = np.empty(rec.size)
    out_p = np.empty(rec.size)
    _kernels.sde_integrate(T, path.grid.dt, params.h, params.J, eps, rec, out_s, out_p)
    dt = path.grid.dt
    return [(int(i) * dt, PhasePoint(float(a), float(b))) for i, a, b in zip(rec, out_s, out_p)]


def sde_trajectory(params: ModelParams, path: WienerPath, eps: float = EPS_CLAMP):
    """``(t, s, p)`` arrays on every grid point."""
    rec = np.arange(path.grid.n_steps + 1, dtype=np.int64)
    out_s = np.empty(rec.size)
    out_p = np.empty(rec.size)
    _kernels.sde_integrate(path.tanh_tilde(params.gamma), path.grid.dt, params.h, params.J,
                           eps, rec, out_s, out_p)
    return path.times, out_s, out_p


def _perturbative_arrays(params: ModelParams, path: WienerPath, rec: np.ndarray):
    x = path.w_tilde(params.gamma)
    T_all = path.tanh_tilde(params.gamma)
    i_s = np.empty(rec.size)
    i_p = np.empty(rec.size)
    _kernels.perturbative_integrals(x, T_all, path.grid.dt, params.J, rec, i_s, i_p)
    T = T_all[rec]
    t = rec * path.grid.dt
    s = 0.5 * T - params.h * i_s
    p = 4.0 * params.J * t * T + 2.0 * params.h * i_p
    return s, p


def perturbative_path(params: ModelParams, path: WienerPath, t: float,
                      order: int = 1, eps: float = EPS_CLAMP) -> PhasePoint:
    """Zeroth- or first-order (in ``h``) solution at grid time ``t``.

    Values with ``|s| > 1/2`` are flagged unphysical and clamped to
    ``+-(1/2 - eps)``; the flag is data, not an error.
    """
    i = path.grid.index_of(t)
    p_ = params if order == 1 else params.replace(h=0.0)
    s, p = _perturbative_arrays(p_, path, np.array([i], dtype=np.int64))
    return _flag_and_clamp(float(s[0]), float(p[0]), eps)


def _flag_and_clamp(s: float, p: float, eps: float) -> PhasePoint:
    if abs(s) > 0.5:
        return PhasePoint(math.copysign(0.5 - eps, s), p, True)
    return PhasePoint(s, p, False)


def perturbative_trajectory(params: ModelParams, path: WienerPath, order: int = 1,
                            eps: float = EPS_CLAMP):
    """``(t, s, p, unphysical)`` arrays on every grid point, clamped like :func:`perturbative_path`."""
    rec = np.arange(path.grid.n_steps + 1, dtype=np.int64)
    p_ = params if order == 1 else params.replace(h=0.0)
    s, p = _perturbative_arrays(p_, path, rec)
    flag = np.abs(s) > 0.5
    s = np.where(flag, np.copysign(0.5 - eps, s), s)
    return path.times, s, p, flag
