"""Closed-form solution of the model without the Hermitian transverse field.

With ``h = 0`` the Dicke states are eigenstates of every term of the
evolution, and the wave-packet peak is ``s = tanh(2 sqrt(gamma) W_t) / 2``.
The rescaled magnetization ``m = ln((1+2s)/(1-2s))`` equals
``4 sqrt(gamma) W_t`` and is therefore Gaussian with variance ``16 gamma t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, xlogy

from .errors import DomainError
from .params import ModelParams  # noqa: F401  (re-exported)


def peak_exact(gamma: float, W_t):
    """Peak location ``tanh(2 sqrt(gamma) W_t) / 2``. Accepts scalars or arrays."""
    if gamma < 0:
        raise DomainError(f"gamma must be >= 0, got {gamma}")
    x = 2.0 * math.sqrt(gamma) * np.asarray(W_t, dtype=float)
    out = 0.5 * np.tanh(x)
    return float(out) if out.ndim == 0 else out


def rescaled_magnetization(s_bar):
    """``ln((1+2s)/(1-2s))`` computed as ``2 artanh(2s)``; odd, increasing."""
    s = np.asarray(s_bar, dtype=float)
    if np.any(np.abs(s) >= 0.5) or np.any(~np.isfinite(s)):
        raise DomainError("rescaled magnetization needs |s| < 1/2")
    m = 2.0 * np.arctanh(2.0 * s)
    return float(m) if m.ndim == 0 else m


def sbar_from_mbar(m_bar):
    """Inverse of :func:`rescaled_magnetization`."""
    s = 0.5 * np.tanh(0.5 * np.asarray(m_bar, dtype=float))
    return float(s) if s.ndim == 0 else s


def variance_mbar(gamma: float, t: float) -> float:
    if t < 0:
        raise DomainError(f"t must be >= 0, got {t}")
    return 16.0 * gamma * t


def _check_density_args(gamma, t):
    if t <= 0:
        raise DomainError("t must be > 0; at t = 0 the peak is a point mass at s = 0")
    if gamma <= 0:
        raise DomainError("gamma must be > 0 for a density to exist")


def pdf_sbar(gamma: float, t: float, s_bar):
    """Density of the peak location at time ``t``.

    The Jacobian ``1/(1 - 4 s^2)`` is evaluated as ``1/((1-2s)(1+2s))`` and
    the exponent through ``artanh`` so the density stays accurate close to
    ``s = +-1/2``, where the mass accumulates at late times.
    """
    _check_density_args(gamma, t)
    s = np.asarray(s_bar, dtype=float)
    if np.any(np.abs(s) >= 0.5):
        raise DomainError("pdf_sbar needs |s| < 1/2")
    m = 2.0 * np.arctanh(2.0 * s)
    jac = 1.0 / ((1.0 - 2.0 * s) * (1.0 + 2.0 * s))
    out = jac / math.sqrt(2.0 * math.pi * gamma * t) * np.exp(-m * m / (32.0 * gamma * t))
    return float(out) if out.ndim == 0 else out


def pdf_mbar(gamma: float, t: float, m_bar):
    _check_density_args(gamma, t)
    m = np.asarray(m_bar, dtype=float)
    var = 16.0 * gamma * t
    out = np.exp(-m * m / (2.0 * var)) / math.sqrt(2.0 * math.pi * var)
    return float(out) if out.ndim == 0 else out


def cdf_sbar(gamma: float, t: float, s_bar):
    """``Phi(m(s) / sqrt(16 gamma t))``; 0 at or below -1/2, 1 at or above 1/2."""
    _check_density_args(gamma, t)
    s = np.asarray(s_bar, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        m = 2.0 * np.arctanh(np.clip(2.0 * s, -1.0, 1.0))
    out = ndtr(m / math.sqrt(16.0 * gamma * t))
    return float(out) if out.ndim == 0 else out


def residue_density_exact(gamma: float, t: float) -> float:
    """Benchmark residue density ``1/sqrt(2 pi gamma t)`` (``1/sqrt(2 pi t)`` in units gamma = 1)."""
    _check_density_args(gamma, t)
    return 1.0 / math.sqrt(2.0 * math.pi * gamma * t)


def log_wavefunction_exact(gamma: float, J: float, t: float, W_t: float, s):
    """Large-N log wave function ``(g, theta)`` with ``phi = exp(-N (g - i theta))``.

    ``g(t, s) = g(0, s) - 2 sqrt(gamma) s W_t`` where ``g(0, s)`` is the
    Stirling entropy term without its s-independent constant, and
    ``theta(t, s) = 4 J t s^2``.
    """
    sa = np.asarray(s, dtype=float)
    if np.any(np.abs(sa) >= 0.5):
        raise DomainError("log wave function is singular at |s| >= 1/2")
    g0 = 0.5 * (xlogy(0.5 + sa, 0.5 + sa) + xlogy(0.5 - sa, 0.5 - sa))
    g = g0 - 2.0 * math.sqrt(gamma) * sa * W_t
    theta = 4.0 * J * t * sa * sa
    if g.ndim == 0:
        return float(g), float(theta)
    return g, theta


@dataclass(frozen=True)
class PointMass:
    """Distribution concentrated at a single peak location (``t = 0``)."""

    location: float = 0.0

    def cdf(self, s_bar):
        out = (np.asarray(s_bar, dtype=float) >= self.location).astype(float)
        return float(out) if out.ndim == 0 else out

    def sample(self, n, rng=None):
        return np.full(n, self.location)


@dataclass(frozen=True)
class PeakDistribution:
    """Analytic law of the peak location at ``t > 0``."""

    gamma: float
    t: float

    def pdf(self, s_bar):
        return pdf_sbar(self.gamma, self.t, s_bar)

    def cdf(self, s_bar):
        return cdf_sbar(self.gamma, self.t, s_bar)

    def sample(self, n, rng: np.random.Generator):
        w = rng.standard_normal(n) * math.sqrt(self.t)
        return peak_exact(self.gamma, w)


def sbar_distribution(gamma: float, t: float):
    """:class:`PointMass` at ``gamma t = 0``, otherwise :class:`PeakDistribution`."""
    if t < 0 or gamma < 0:
        raise DomainError("need t >= 0 and gamma >= 0")
    if gamma * t == 0:
        return PointMass(0.0)
    return PeakDistribution(gamma, t)
