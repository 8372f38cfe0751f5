"""Monte Carlo ensembles of peak trajectories and the statistics built on them.

Trajectory ``i`` always draws its noise from stream ``(master_seed, i)``; a
worker pool only decides who computes which rows, so every statistic is
bit-identical across thread counts.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from . import _kernels
from .dicke import evolve_path, init_plus_x
from .errors import CapacityError, ConfigurationError, FitError
from .params import ModelParams
from .semiclassical import EPS_CLAMP
from .stochastic import RngSeed, TimeGrid, generate_wiener_path

METHODS = ("exact", "sde", "perturbative", "wavefunction")
_METHOD_CODE = {"exact": 0, "sde": 1, "perturbative": 2}
WAVEFUNCTION_BUDGET = 5e9  # n_samples * (N + 1) * n_steps
ATOM_TOL = 1e-8
THREADS_ENV = "RNH_THREADS"


def default_threads() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


@dataclass(frozen=True)
class EnsembleConfig:
    method: str = "sde"
    params: ModelParams = field(default_factory=ModelParams)
    n_samples: int = 1000
    master_seed: int = 0
    grid: TimeGrid = field(default_factory=lambda: TimeGrid.from_t_max(1.0))
    record_times: tuple = (1.0,)
    histogram_bins: int = 101
    negate_paths: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigurationError(f"unknown method {self.method!r}; choose from {METHODS}")
        if int(self.n_samples) != self.n_samples or self.n_samples < 1:
            raise ConfigurationError("n_samples must be a positive integer")
        if self.histogram_bins < 1 or self.histogram_bins % 2 == 0:
            raise ConfigurationError("histogram_bins must be odd so that s = 0 is a bin center")
        RngSeed(self.master_seed, 0)
        object.__setattr__(self, "record_times", tuple(float(t) for t in self.record_times))
        self.grid.indices_of(self.record_times)

    def record_indices(self) -> np.ndarray:
        return self.grid.indices_of(self.record_times)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["record_times"] = list(self.record_times)
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class SampleSet:
    """Peak samples at one time; row ``i`` belongs to trajectory ``i``."""

    time: float
    s_bar: np.ndarray
    p_bar: np.ndarray
    unphysical: np.ndarray
    method: str = ""
    config_hash: str = ""

    def __len__(self) -> int:
        return self.s_bar.size

    @property
    def values(self) -> np.ndarray:
        return np.column_stack([self.s_bar, self.p_bar, self.unphysical.astype(float)])

    def identical_to(self, other: "SampleSet") -> bool:
        return (self.time == other.time and np.array_equal(self.s_bar, other.s_bar)
                and np.array_equal(self.p_bar, other.p_bar)
                and np.array_equal(self.unphysical, other.unphysical))


@dataclass(frozen=True, eq=False)
class ScanResult:
    """Samples for several fields ``h`` that share every Brownian path.

    ``s_bar``/``p_bar``/``unphysical`` have shape ``(n_samples, n_h, n_times)``.
    """

    config: EnsembleConfig
    h_values: np.ndarray
    times: np.ndarray
    s_bar: np.ndarray
    p_bar: np.ndarray
    unphysical: np.ndarray

    def sample_set(self, h_index: int, t_index: int) -> SampleSet:
        cfg = self.config
        params = cfg.params.replace(h=float(self.h_values[h_index]))
        chash = EnsembleConfig(cfg.method, params, cfg.n_samples, cfg.master_seed, cfg.grid,
                               cfg.record_times, cfg.histogram_bins, cfg.negate_paths).config_hash()
        return SampleSet(float(self.times[t_index]), self.s_bar[:, h_index, t_index],
                         self.p_bar[:, h_index, t_index], self.unphysical[:, h_index, t_index],
                         cfg.method, chash)

    def sample_sets(self, h_index: int = 0) -> list[SampleSet]:
        return [self.sample_set(h_index, j) for j in range(self.times.size)]


def _check_budget(config: EnsembleConfig, n_h: int):
    if config.method == "wavefunction":
        cost = float(config.n_samples) * (config.params.N + 1) * config.grid.n_steps * n_h
        if cost > WAVEFUNCTION_BUDGET:
            raise CapacityError(
                f"wavefunction ensemble needs ~{cost:.3g} amplitude updates "
                f"(budget {WAVEFUNCTION_BUDGET:.3g}); reduce n_samples, N or t_max")


def _chunks(n: int, threads: int):
    size = max(1, math.ceil(n / (threads * 4)))
    return [(a, min(n, a + size)) for a in range(0, n, size)]


def run_scan(config: EnsembleConfig, h_values=None, threads: int | None = None) -> ScanResult:
    """Simulate ``config`` for every field in ``h_values`` on shared noise."""
    hs = np.array([config.params.h] if h_values is None else list(h_values), dtype=float)
    _check_budget(config, hs.size)
    rec = config.record_indices()
    order = np.argsort(rec, kind="stable")
    rec_sorted = np.ascontiguousarray(rec[order])
    n, R = config.n_samples, rec.size
    S = np.empty((n, hs.size, R))
    P = np.empty((n, hs.size, R))
    threads = threads or default_threads()

    if config.method == "wavefunction":
        _run_wavefunction(config, hs, rec_sorted, S, P)
    else:
        code = _METHOD_CODE[config.method]
        grid = config.grid
        sign = -1.0 if config.negate_paths else 1.0
        two_sqrt_gamma = 2.0 * math.sqrt(config.params.gamma)
        sqrt_dt = math.sqrt(grid.dt)
        n_steps = grid.n_steps

        def work(bounds):
            inc = np.empty(n_steps)
            cum = np.empty(n_steps + 1)
            T = np.empty(n_steps + 1)
            aux = np.empty(R)
            for i in range(*bounds):
                gen = RngSeed(config.master_seed, i).generator()
                _kernels.ensemble_trajectory(gen, sign, code, sqrt_dt, grid.dt, two_sqrt_gamma, hs,
                                             config.params.J, EPS_CLAMP, rec_sorted, S[i], P[i],
                                             aux, inc, cum, T)

        chunks = _chunks(n, threads)
        if threads == 1:
            for c in chunks:
                work(c)
        else:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                list(pool.map(work, chunks))

    # undo the sort so axis 2 follows config.record_times
    inv = np.empty_like(order)
    inv[order] = np.arange(order.size)
    S = S[:, :, inv]
    P = P[:, :, inv]
    flags = np.abs(S) > 0.5
    if config.method == "perturbative":
        S = np.where(flags, np.copysign(0.5 - EPS_CLAMP, S), S)
    return ScanResult(config, hs, np.array(config.record_times), S, P, flags)


def _run_wavefunction(config, hs, rec_sorted, S, P):
    times = rec_sorted * config.grid.dt
    for i in range(config.n_samples):
        path = generate_wiener_path(config.grid, RngSeed(config.master_seed, i))
        if config.negate_paths:
            path = path.negated()
        for k, h in enumerate(hs):
            params = config.params.replace(h=float(h))
            recs = evolve_path(init_plus_x(params.N), params, path, times)
            by_t = {round(r.t / config.grid.dt): r for r in recs}
            for j, idx in enumerate(rec_sorted):
                S[i, k, j] = by_t[int(idx)].s_bar
                P[i, k, j] = by_t[int(idx)].p_bar


def run_ensemble(config: EnsembleConfig, threads: int | None = None) -> list[SampleSet]:
    """One :class:`SampleSet` per record time, in ``config.record_times`` order."""
    return run_scan(config, None, threads).sample_sets(0)


def empirical_cdf(samples: SampleSet, eval_points) -> np.ndarray:
    """Right-continuous ``F(x) = #{s <= x} / n``."""
    s = np.sort(samples.s_bar)
    if s.size == 0:
        raise ConfigurationError("empty sample set")
    x = np.asarray(eval_points, dtype=float)
    return np.searchsorted(s, x, side="right") / s.size


def cdf_sup_distance(samples: SampleSet, cdf) -> float:
    """Kolmogorov-Smirnov distance between the samples and a continuous CDF."""
    s = np.sort(samples.s_bar)
    n = s.size
    F = np.asarray(cdf(s), dtype=float)
    hi = np.arange(1, n + 1) / n
    lo = np.arange(0, n) / n
    return float(max(np.max(hi - F), np.max(F - lo)))


def symmetry_defect(samples: SampleSet, grid_points: int = 2001) -> float:
    """``sup_x |F(x) + F(-x^-) - 1|``; zero for a Z2-symmetric law."""
    s = np.sort(samples.s_bar)
    x = np.unique(np.concatenate([np.abs(s), np.linspace(0, 0.5, grid_points)]))
    n = s.size
    F = np.searchsorted(s, x, side="right") / n
    F_left_neg = np.searchsorted(s, -x, side="left") / n
    return float(np.max(np.abs(F + F_left_neg - 1.0)))


class Residue(NamedTuple):
    value: float
    se: float
    r: float


def residue_probability(samples: SampleSet, r: float = 0.05) -> Residue:
    """``Pr(-r < s < r) / 2r`` with its binomial standard error."""
    if not 0 < r < 0.5:
        raise ConfigurationError("r must lie in (0, 1/2)")
    n = len(samples)
    k = int(np.count_nonzero(np.abs(samples.s_bar) < r))
    prob = k / n
    return Residue(prob / (2 * r), math.sqrt(prob * (1 - prob) / n) / (2 * r), r)


@dataclass(frozen=True)
class ResidueFit:
    """Fit of ``delta_tilde(t) = c / sqrt(t) + delta``."""

    times: np.ndarray
    delta_tilde: np.ndarray
    c: float
    delta: float
    cov: np.ndarray
    residual: float
    r: float = 0.05

    @property
    def c_se(self) -> float:
        return math.sqrt(self.cov[0, 0])

    @property
    def delta_se(self) -> float:
        return math.sqrt(self.cov[1, 1])

    @property
    def delta_display(self) -> float:
        return max(0.0, self.delta)

    def to_dict(self) -> dict:
        return {"c": self.c, "delta": self.delta, "c_se": self.c_se, "delta_se": self.delta_se,
                "cov": self.cov.tolist(), "residual": self.residual, "r": self.r,
                "times": self.times.tolist(), "delta_tilde": self.delta_tilde.tolist()}


def fit_residue(times, deltas, weights=None, r: float = 0.05) -> ResidueFit:
    """Weighted linear least squares in the regressor ``1/sqrt(t)``.

    ``weights`` are standard errors (the fit uses ``1/se^2``). The returned
    covariance is scaled by the reduced chi-square when that exceeds one,
    so oscillations that the model ignores widen the error bars.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(deltas, dtype=float)
    if t.size < 3 or t.size != y.size:
        raise FitError("need at least 3 (time, residue) points")
    if np.any(t <= 0):
        raise FitError("times must be positive")
    if np.ptp(t) == 0:
        raise FitError("degenerate regressor: all times equal")
    if weights is None:
        w = np.ones_like(t)
    else:
        se = np.asarray(weights, dtype=float)
        w = np.where(se > 0, 1.0 / np.where(se > 0, se, 1.0) ** 2, 0.0)
        if not np.any(w > 0) or np.any(se <= 0):
            w = np.ones_like(t)
    X = np.column_stack([t ** -0.5, np.ones_like(t)])
    sw = np.sqrt(w)
    beta, *_ = np.linalg.lstsq(X * sw[:, None], y * sw, rcond=None)
    resid = y - X @ beta
    xtwx_inv = np.linalg.inv((X * w[:, None]).T @ X)
    dof = t.size - 2
    chi2_red = float(np.sum(w * resid**2) / dof) if dof > 0 else 1.0
    cov = xtwx_inv * max(1.0, chi2_red)
    return ResidueFit(t, y, float(beta[0]), float(beta[1]), cov,
                      float(np.sqrt(np.mean(resid**2))), r)


def residue_series(scan: ScanResult, h_index: int = 0, r: float = 0.05):
    """``(times, delta_tilde, se)`` for one field of a scan."""
    vals = [residue_probability(scan.sample_set(h_index, j), r) for j in range(scan.times.size)]
    return scan.times.copy(), np.array([v.value for v in vals]), np.array([v.se for v in vals])


@dataclass(frozen=True)
class CrossingEstimate:
    times: np.ndarray
    h_values: np.ndarray
    curves: np.ndarray  # (n_times, n_h)
    h_c: float | None
    ci: tuple[float, float] | None
    pair_crossings: dict
    n_boot: int = 0

    @property
    def found(self) -> bool:
        return self.h_c is not None

    def to_dict(self) -> dict:
        return {"h_c": self.h_c, "ci": list(self.ci) if self.ci else None, "found": self.found,
                "times": self.times.tolist(), "h_values": self.h_values.tolist(),
                "curves": self.curves.tolist(), "n_boot": self.n_boot,
                "pair_crossings": {f"{a},{b}": v for (a, b), v in self.pair_crossings.items()}}


def _roots(h, d):
    out = []
    for k in range(h.size - 1):
        a, b = d[k], d[k + 1]
        if a == 0:
            out.append(float(h[k]))
        elif a * b < 0:
            out.append(float(h[k] + (h[k + 1] - h[k]) * a / (a - b)))
    if d[-1] == 0:
        out.append(float(h[-1]))
    return out


def crossing_from_curves(h_values, times, curves):
    """Pairwise intersections of ``delta_tilde(h; t)`` curves by linear interpolation.

    Returns ``(h_c, pair_crossings)`` where ``h_c`` is the median of all
    pairwise roots, or ``None`` when no pair changes sign.
    """
    h = np.asarray(h_values, dtype=float)
    C = np.asarray(curves, dtype=float)
    pairs = {}
    roots = []
    for a, b in itertools.combinations(range(len(times)), 2):
        rts = _roots(h, C[a] - C[b])
        pairs[(float(times[a]), float(times[b]))] = rts
        roots.extend(rts)
    if not roots:
        return None, pairs
    return float(np.median(roots)), pairs


def crossing_scan(h_list, times, base: EnsembleConfig, r: float = 0.05, n_boot: int = 200,
                  boot_seed: int = 0, threads: int | None = None,
                  scan: ScanResult | None = None) -> CrossingEstimate:
    """Locate the field where residue curves at different times intersect.

    The confidence interval is the 2.5-97.5 percentile range of ``h_c`` over
    ``n_boot`` trajectory resamples. Pass ``scan`` to reuse an existing
    shared-path simulation that contains every requested field and time.
    """
    h = np.asarray(h_list, dtype=float)
    if h.size < 4 or len(times) < 2:
        raise ConfigurationError("crossing scan needs >= 4 fields and >= 2 times")
    if scan is None:
        cfg = EnsembleConfig(base.method, base.params, base.n_samples, base.master_seed,
                             base.grid, tuple(times), base.histogram_bins, base.negate_paths)
        scan = run_scan(cfg, h, threads)
    h_idx = [int(np.flatnonzero(np.isclose(scan.h_values, x))[0]) for x in h]
    t_idx = [int(np.flatnonzero(np.isclose(scan.times, t))[0]) for t in times]
    inside = np.abs(scan.s_bar[:, h_idx][:, :, t_idx]) < r  # (n, n_h, n_t)
    n = inside.shape[0]
    flat = inside.reshape(n, -1).astype(np.float64)

    def curves_from(counts_per_traj):
        tot = counts_per_traj @ flat
        return (tot / (n * 2 * r)).reshape(h.size, len(times)).T

    curves = curves_from(np.ones(n))
    h_c, pairs = crossing_from_curves(h, times, curves)
    ci = None
    if h_c is not None and n_boot > 0:
        rng = np.random.Generator(np.random.Philox(key=np.array([boot_seed, 2**63], dtype=np.uint64)))
        boot = []
        for _ in range(n_boot):
            counts = np.bincount(rng.integers(0, n, n), minlength=n).astype(np.float64)
            hb, _ = crossing_from_curves(h, times, curves_from(counts))
            if hb is not None:
                boot.append(hb)
        if boot:
            ci = (float(np.percentile(boot, 2.5)), float(np.percentile(boot, 97.5)))
    return CrossingEstimate(np.asarray(times, dtype=float), h, curves, h_c, ci, pairs, n_boot)


@dataclass(frozen=True)
class PhaseScatter:
    s_bar: np.ndarray
    p_bar: np.ndarray
    correlation: float


def wrap_angle(p):
    return (np.asarray(p) + math.pi) % (2 * math.pi) - math.pi


def phase_scatter(samples: SampleSet, subsample: int | None = None) -> PhaseScatter:
    """Stride-subsampled ``(s, p)`` with ``p`` wrapped to ``[-pi, pi)``.

    The correlation coefficient is computed over the full set (wrapped ``p``).
    """
    n = len(samples)
    m = n if subsample is None else int(subsample)
    if not 1 <= m <= n:
        raise ConfigurationError("subsample must be between 1 and the sample count")
    p = wrap_angle(samples.p_bar)
    stride = n // m
    idx = np.arange(0, stride * m, stride)
    s = samples.s_bar
    if np.std(s) == 0 or np.std(p) == 0:
        rho = 0.0
    else:
        rho = float(np.corrcoef(s, p)[0, 1])
    return PhaseScatter(s[idx].copy(), p[idx].copy(), rho)


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    counts: np.ndarray
    atom_minus: int
    atom_plus: int

    @property
    def density(self) -> np.ndarray:
        n = self.counts.sum()
        return self.counts / (n * np.diff(self.edges))


def histogram(samples: SampleSet, bins: int = 101) -> Histogram:
    """Counts on ``bins`` equal cells of ``[-1/2, 1/2]``; boundary atoms also reported alone."""
    edges = np.linspace(-0.5, 0.5, bins + 1)
    counts, _ = np.histogram(np.clip(samples.s_bar, -0.5, 0.5), bins=edges)
    atom_minus = int(np.count_nonzero(samples.s_bar <= -0.5 + ATOM_TOL))
    atom_plus = int(np.count_nonzero(samples.s_bar >= 0.5 - ATOM_TOL))
    return Histogram(edges, counts, atom_minus, atom_plus)
