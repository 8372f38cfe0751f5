"""Classical long-time limit: Hamiltonian flow, energy contours, Liouville transport.

Once ``tanh(W~)`` has saturated the noise terms drop out and the peak moves
on level sets of

    H(s, p) = 2 h sqrt(1/4 - s^2) cos p - 4 J s^2

with ``ds/dt = dH/dp`` and ``dp/dt = -dH/ds``. The velocity field is
divergence free, so a density that is uniform in ``(s, p)`` is stationary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from skimage import measure

from .errors import ConfigurationError, DomainError
from .params import ModelParams
from .semiclassical import PhasePoint


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def hamiltonian(pt: PhasePoint, params: ModelParams):
    return hamiltonian_sp(pt.s_bar, pt.p_bar, params)


def hamiltonian_sp(s, p, params: ModelParams):
    s = np.asarray(s, dtype=float)
    if np.any(np.abs(s) > 0.5):
        raise DomainError("hamiltonian needs |s| <= 1/2")
    q = np.sqrt(np.maximum(0.25 - s * s, 0.0))
    return _out(2.0 * params.h * q * np.cos(p) - 4.0 * params.J * s * s)


def classical_flow(pt: PhasePoint, params: ModelParams) -> tuple[float, float]:
    """``(ds/dt, dp/dt)`` of the noise-free peak dynamics.

    At ``|s| = 1/2`` the momentum equation is singular: the result is
    ``(0, +-inf)`` (``inf`` marks the singular point) unless ``h cos p = 0``.
    """
    return classical_flow_sp(pt.s_bar, pt.p_bar, params)


def classical_flow_sp(s, p, params: ModelParams):
    s = np.asarray(s, dtype=float)
    p = np.asarray(p, dtype=float)
    if np.any(np.abs(s) > 0.5):
        raise DomainError("classical_flow needs |s| <= 1/2")
    h, J = params.h, params.J
    q = np.sqrt(np.maximum(0.25 - s * s, 0.0))
    ds = -2.0 * h * q * np.sin(p)
    with np.errstate(divide="ignore", invalid="ignore"):
        coef = np.where(q > 0, 2.0 * h * s / np.where(q > 0, q, 1.0),
                        np.copysign(np.inf, s) if h != 0 else 0.0)
        drift = coef * np.cos(p)
        drift = np.where(np.isnan(drift), 0.0, drift)
    dp = drift + 8.0 * J * s
    return _out(ds), _out(dp)


def divergence_fd(s, p, params: ModelParams, eps: float = 1e-5):
    """Central-difference divergence of the classical flow."""
    ds_plus, _ = classical_flow_sp(s + eps, p, params)
    ds_minus, _ = classical_flow_sp(s - eps, p, params)
    _, dp_plus = classical_flow_sp(s, p + eps, params)
    _, dp_minus = classical_flow_sp(s, p - eps, params)
    return (np.asarray(ds_plus) - ds_minus) / (2 * eps) + (np.asarray(dp_plus) - dp_minus) / (2 * eps)


def integrate_flow(pt: PhasePoint, params: ModelParams, t_max: float, dt: float):
    """Classical RK4 trajectory; returns ``(t, s, p)`` arrays."""
    n = int(round(t_max / dt))
    t = np.arange(n + 1) * dt
    s = np.empty(n + 1)
    p = np.empty(n + 1)
    s[0], p[0] = pt.s_bar, pt.p_bar

    def f(x, y):
        return classical_flow_sp(x, y, params)

    for i in range(n):
        x, y = s[i], p[i]
        k1 = f(x, y)
        k2 = f(x + 0.5 * dt * k1[0], y + 0.5 * dt * k1[1])
        k3 = f(x + 0.5 * dt * k2[0], y + 0.5 * dt * k2[1])
        k4 = f(x + dt * k3[0], y + dt * k3[1])
        s[i + 1] = x + dt / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        p[i + 1] = y + dt / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    return t, s, p


def fixed_points(params: ModelParams) -> list[PhasePoint]:
    """Stationary points in ``|s| < 1/2``, ``p`` in ``[-pi, pi)``."""
    pts = [PhasePoint(0.0, 0.0), PhasePoint(0.0, -math.pi)]
    h, J = params.h, params.J
    if J > 0 and h < 2 * J:
        # cos p = -1 with 2h / sqrt(1/4 - s^2) = 8J
        q = h / (4 * J)
        s = math.sqrt(0.25 - q * q)
        pts += [PhasePoint(s, -math.pi), PhasePoint(-s, -math.pi)]
    return pts


@dataclass(frozen=True)
class Contour:
    level: float
    s: np.ndarray
    p: np.ndarray
    direction: int  # +1 if the flow runs along increasing vertex index, -1 against, 0 unknown


def energy_contours(params: ModelParams, levels, resolution: int = 256) -> list[Contour]:
    """Marching-squares level sets of ``H`` on ``[-1/2, 1/2] x [-pi, pi]``."""
    if resolution < 32:
        raise ConfigurationError("resolution must be >= 32")
    s_ax = np.linspace(-0.5, 0.5, resolution)
    p_ax = np.linspace(-math.pi, math.pi, resolution)
    S, P = np.meshgrid(s_ax, p_ax, indexing="ij")
    H = hamiltonian_sp(S, P, params)
    out: list[Contour] = []
    for level in levels:
        if not (H.min() <= level <= H.max()):
            continue
        for poly in measure.find_contours(H, level):
            s = np.interp(poly[:, 0], np.arange(resolution), s_ax)
            p = np.interp(poly[:, 1], np.arange(resolution), p_ax)
            out.append(Contour(float(level), s, p, _direction(s, p, params)))
    return out


def _direction(s, p, params):
    if s.size < 2:
        return 0
    m = s.size // 2
    j = min(m + 1, s.size - 1)
    i = j - 1
    ts, tp = s[j] - s[i], p[j] - p[i]
    vs, vp = classical_flow_sp(0.5 * (s[i] + s[j]), 0.5 * (p[i] + p[j]), params)
    dot = ts * vs + tp * vp
    if not math.isfinite(dot) or dot == 0:
        return 0
    return 1 if dot > 0 else -1


@dataclass
class DensityGrid:
    """Cell averages of ``P(s, p)`` on ``(-1/2, 1/2) x [-pi, pi)``; ``p`` is periodic."""

    values: np.ndarray

    @classmethod
    def uniform(cls, n_s: int = 256, n_p: int = 256) -> "DensityGrid":
        return cls(np.full((n_s, n_p), 1.0 / (1.0 * 2.0 * math.pi)))

    @classmethod
    def from_function(cls, f, n_s: int = 256, n_p: int = 256) -> "DensityGrid":
        g = cls(np.zeros((n_s, n_p)))
        S, P = np.meshgrid(g.s_centers, g.p_centers, indexing="ij")
        vals = np.asarray(f(S, P), dtype=float)
        g.values = vals / (vals.sum() * g.ds * g.dp)
        return g

    @property
    def n_s(self) -> int:
        return self.values.shape[0]

    @property
    def n_p(self) -> int:
        return self.values.shape[1]

    @property
    def ds(self) -> float:
        return 1.0 / self.n_s

    @property
    def dp(self) -> float:
        return 2.0 * math.pi / self.n_p

    @property
    def s_centers(self) -> np.ndarray:
        return -0.5 + (np.arange(self.n_s) + 0.5) * self.ds

    @property
    def p_centers(self) -> np.ndarray:
        return -math.pi + (np.arange(self.n_p) + 0.5) * self.dp

    def mass(self) -> float:
        return float(self.values.sum() * self.ds * self.dp)

    def center_of_mass(self) -> tuple[float, float]:
        w = self.values / self.values.sum()
        return float((w.sum(1) * self.s_centers).sum()), float((w.sum(0) * self.p_centers).sum())

    def copy(self) -> "DensityGrid":
        return DensityGrid(self.values.copy())


def _face_fluxes(grid: DensityGrid, params: ModelParams):
    """Integrated face velocities from corner values of ``H`` (a stream function).

    ``Fs[i, j]``: flux through the s-face at ``s_{i-1/2}`` (shape n_s+1, n_p);
    ``Fp[i, j]``: flux through the p-face at ``p_{j-1/2}`` (shape n_s, n_p,
    periodic). Every cell's fluxes telescope to zero, so the discrete flow is
    exactly divergence free and the s-boundary faces carry no flux.
    """
    s_faces = -0.5 + np.arange(grid.n_s + 1) * grid.ds
    p_faces = -math.pi + np.arange(grid.n_p + 1) * grid.dp
    S, P = np.meshgrid(s_faces, p_faces, indexing="ij")
    Hc = hamiltonian_sp(S, P, params)
    Hc[0, :] = Hc[0, 0]
    Hc[-1, :] = Hc[-1, 0]
    # ds/dt = dH/dp: flux through s-face = H(top corner) - H(bottom corner)
    Fs = Hc[:, 1:] - Hc[:, :-1]
    # dp/dt = -dH/ds: flux through p-face = -(H(right) - H(left))
    Fp = -(Hc[1:, :-1] - Hc[:-1, :-1])
    return Fs, Fp


def _minmod(a, b):
    return np.where(a * b > 0, np.sign(a) * np.minimum(np.abs(a), np.abs(b)), 0.0)


def max_courant(grid: DensityGrid, params: ModelParams, dt: float) -> float:
    Fs, Fp = _face_fluxes(grid, params)
    out_flux = (np.maximum(Fs[1:], 0) + np.maximum(-Fs[:-1], 0)
                + np.maximum(np.roll(Fp, -1, axis=1), 0) + np.maximum(-Fp, 0))
    return float(out_flux.max() * dt / (grid.ds * grid.dp))


def evolve_density(grid: DensityGrid, params: ModelParams, dt: float, n_steps: int,
                   limiter: bool = False, cfl_max: float = 0.9) -> DensityGrid:
    """Conservative upwind transport ``dP/dt + div(v P) = 0``.

    ``p`` is periodic and the ``s = +-1/2`` faces are closed. With
    ``limiter=True`` face values use a minmod-limited linear reconstruction
    (positivity then needs the Courant number below 1/2).
    """
    Fs, Fp = _face_fluxes(grid, params)
    area = grid.ds * grid.dp
    courant = max_courant(grid, params, dt)
    limit = 0.5 if limiter else cfl_max
    if courant >= limit:
        suggested = dt * 0.8 * limit / courant
        raise ConfigurationError(f"CFL violated (Courant {courant:.3g} >= {limit}); try dt <= {suggested:.3g}")
    P = grid.values.astype(float, copy=True)
    Fs_in = Fs[1:-1]  # interior s-faces, between cell i-1 and i
    for _ in range(n_steps):
        if limiter:
            ds_slope = np.zeros_like(P)
            ds_slope[1:-1] = _minmod(P[1:-1] - P[:-2], P[2:] - P[1:-1])
            dp_slope = _minmod(P - np.roll(P, 1, axis=1), np.roll(P, -1, axis=1) - P)
            left_s = P[:-1] + 0.5 * ds_slope[:-1]
            right_s = P[1:] - 0.5 * ds_slope[1:]
            left_p = np.roll(P + 0.5 * dp_slope, 1, axis=1)
            right_p = P - 0.5 * dp_slope
        else:
            left_s, right_s = P[:-1], P[1:]
            left_p, right_p = np.roll(P, 1, axis=1), P
        flux_s = np.where(Fs_in > 0, Fs_in * left_s, Fs_in * right_s)
        flux_p = np.where(Fp > 0, Fp * left_p, Fp * right_p)
        div = np.zeros_like(P)
        div[:-1] += flux_s
        div[1:] -= flux_s
        div += np.roll(flux_p, -1, axis=1) - flux_p
        P = P - dt / area * div
    return DensityGrid(P)
