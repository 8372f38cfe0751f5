"""Direct evolution of the wave function on the symmetric Dicke sector.

The Hamiltonian and the noise operator are collective, so a state that starts
in the maximal-spin sector stays there. Index ``n = 0..N`` counts up-spins;
the magnetization per spin is ``s = (2n - N) / (2N)``.

This solver is the ground truth against which the semiclassical peak
equations are checked.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .errors import CapacityError, ConfigurationError, InvalidStateError, NumericalOverflowError
from .params import ModelParams
from .stochastic import WienerPath

MAX_DENSE_N = 10**6
EXPM_TOL = 1e-12


@dataclass
class DickeWaveFunction:
    """Amplitudes over Dicke states; the true vector is ``exp(norm_log) * amplitudes``."""

    N: int
    amplitudes: np.ndarray
    norm_log: float = 0.0

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=np.complex128)
        if self.amplitudes.shape != (self.N + 1,):
            raise InvalidStateError(f"expected {self.N + 1} amplitudes, got {self.amplitudes.shape}")

    @property
    def s(self) -> np.ndarray:
        return (2.0 * np.arange(self.N + 1) - self.N) / (2.0 * self.N)

    def copy(self) -> "DickeWaveFunction":
        return DickeWaveFunction(self.N, self.amplitudes.copy(), self.norm_log)

    def log_norm(self) -> float:
        """``ln`` of the Euclidean norm of the prenormalized vector."""
        return self.norm_log + math.log(np.linalg.norm(self.amplitudes))

    def normalize(self) -> "DickeWaveFunction":
        nrm = np.linalg.norm(self.amplitudes)
        if nrm == 0 or not math.isfinite(nrm):
            raise InvalidStateError("cannot normalize a zero or non-finite state")
        return DickeWaveFunction(self.N, self.amplitudes / nrm, 0.0)

    def reflected(self) -> "DickeWaveFunction":
        """Image under the global spin flip, ``n -> N - n``."""
        return DickeWaveFunction(self.N, self.amplitudes[::-1].copy(), self.norm_log)


@dataclass(frozen=True)
class CollectiveOperators:
    """``sigma_z`` (diagonal, eigenvalues ``2n - N``) and ``sigma_x`` (tridiagonal)
    restricted to the spin ``N/2`` sector."""

    N: int
    sz_diag: np.ndarray = field(repr=False)
    sx_offdiag: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, N: int) -> "CollectiveOperators":
        n = np.arange(N + 1, dtype=float)
        sz = 2.0 * n - N
        # <n+1| sigma_x |n> = sqrt((N - n)(n + 1)), n = 0..N-1
        off = np.sqrt((N - n[:-1]) * (n[:-1] + 1.0))
        return cls(N, sz, off)

    def apply_sx(self, psi: np.ndarray) -> np.ndarray:
        out = np.zeros_like(psi)
        out[1:] += self.sx_offdiag * psi[:-1]
        out[:-1] += self.sx_offdiag * psi[1:]
        return out

    def sx_dense(self) -> np.ndarray:
        return np.diag(self.sx_offdiag, 1) + np.diag(self.sx_offdiag, -1)

    def expm_sx_apply(self, coeff: complex, psi: np.ndarray, tol: float = EXPM_TOL) -> np.ndarray:
        """``exp(coeff * sigma_x) @ psi`` by a scaled Taylor series.

        The spectrum of ``sigma_x`` lies in ``[-N, N]``; the interval is cut
        into substeps of norm at most 1/2 and each substep is summed until
        the next term drops below ``tol`` relative to the vector norm.
        """
        bound = abs(coeff) * self.N
        if bound == 0:
            return psi.copy()
        substeps = max(1, math.ceil(bound / 0.5))
        c = coeff / substeps
        out = psi.astype(np.complex128, copy=True)
        for _ in range(substeps):
            term = out
            acc = out.copy()
            scale = np.linalg.norm(out)
            k = 1
            while True:
                term = self.apply_sx(term) * (c / k)
                acc += term
                if np.linalg.norm(term) <= tol * scale or k > 60:
                    break
                k += 1
            out = acc
        return out


_ops_cache: dict[int, CollectiveOperators] = {}


def operators(N: int) -> CollectiveOperators:
    ops = _ops_cache.get(N)
    if ops is None:
        ops = _ops_cache[N] = CollectiveOperators.build(N)
    return ops


def init_plus_x(N: int) -> DickeWaveFunction:
    """All spins along +x: ``psi_n = sqrt(C(N, n) / 2^N)``."""
    if int(N) != N or N < 1:
        raise ConfigurationError(f"N must be a positive integer, got {N}")
    if N > MAX_DENSE_N:
        raise CapacityError(f"N={N} exceeds dense storage limit {MAX_DENSE_N}")
    n = np.arange(N + 1)
    log_c = gammaln(N + 1) - gammaln(n + 1) - gammaln(N - n + 1)
    amps = np.exp(0.5 * (log_c - N * math.log(2.0)))
    # enforce the exact n <-> N - n symmetry that the float path may break
    amps = 0.5 * (amps + amps[::-1])
    amps /= math.sqrt(math.fsum(amps * amps))
    return DickeWaveFunction(N, amps.astype(np.complex128), 0.0)


def _diag_factor(ops: CollectiveOperators, params: ModelParams, dW: float, dt: float) -> np.ndarray:
    z = ops.sz_diag
    return np.exp(math.sqrt(params.gamma) * z * dW + 1j * dt * (params.J / ops.N) * z * z)


def _rescale(wf_amps: np.ndarray, norm_log: float, N: int) -> DickeWaveFunction:
    m = np.max(np.abs(wf_amps))
    if not math.isfinite(m) or m == 0:
        raise NumericalOverflowError("amplitudes became zero or non-finite")
    return DickeWaveFunction(N, wf_amps / m, norm_log + math.log(m))


def step_prenormalized(wf: DickeWaveFunction, params: ModelParams, dW: float, dt: float) -> DickeWaveFunction:
    """One step ``phi -> exp(-i dH) phi`` of the linear, non-unitary evolution.

    Symmetric splitting: half of the diagonal factor
    ``exp(sqrt(gamma) Sz dW + i (J/N) Sz^2 dt)`` on each side of the
    transverse-field factor ``exp(-i h dt Sx)``. The diagonal factor is exact
    and already contains the Ito ``V^2 dt / 2`` term. The largest amplitude is
    factored into ``norm_log`` after every step.
    """
    if dt <= 0:
        raise ConfigurationError(f"dt must be positive, got {dt}")
    ops = operators(wf.N)
    if params.h == 0.0:
        amps = _diag_factor(ops, params, dW, dt) * wf.amplitudes
    else:
        half = _diag_factor(ops, params, 0.5 * dW, 0.5 * dt)
        amps = half * wf.amplitudes
        amps = ops.expm_sx_apply(-1j * params.h * dt, amps)
        amps = half * amps
    return _rescale(amps, wf.norm_log, wf.N)


def normalized_step(wf: DickeWaveFunction, params: ModelParams, dW: float, dt: float,
                    scheme: str = "euler") -> DickeWaveFunction:
    """Explicit Euler-Maruyama step of the nonlinear equation for the normalized state.

    ``d psi = -i H0 psi dt + dW (V - <V>) psi
              + dt [ (V - <V>)^2 / 2 - (<V^2> - <V>^2) ] psi``
    followed by renormalization. ``scheme="milstein"`` adds the
    ``(1/2) b'b (dW^2 - dt)`` correction of the noise coefficient
    ``b = (V - <V>) psi``, which is ``[(V - <V>)^2 / 2 - Var V] psi (dW^2 - dt)``.
    """
    if scheme not in ("euler", "milstein"):
        raise ConfigurationError(f"unknown scheme {scheme!r}")
    ops = operators(wf.N)
    psi = wf.amplitudes / np.linalg.norm(wf.amplitudes)
    v = math.sqrt(params.gamma) * ops.sz_diag
    prob = np.abs(psi) ** 2
    ev = float(np.dot(prob, v))
    ev2 = float(np.dot(prob, v * v))
    dv = v - ev
    h0psi = -(params.J / wf.N) * ops.sz_diag**2 * psi
    if params.h != 0.0:
        h0psi = h0psi + params.h * ops.apply_sx(psi)
    var = ev2 - ev * ev
    dpsi = -1j * dt * h0psi + dW * dv * psi + dt * (0.5 * dv * dv - var) * psi
    if scheme == "milstein":
        dpsi = dpsi + (0.5 * dv * dv - var) * psi * (dW * dW - dt)
    new = psi + dpsi
    nrm = np.linalg.norm(new)
    if not math.isfinite(nrm) or nrm == 0:
        raise NumericalOverflowError("normalized step produced a zero or non-finite state")
    return DickeWaveFunction(wf.N, new / nrm, 0.0)


def _peak_index(absval: np.ndarray) -> int:
    if not np.any(absval > 0):
        raise InvalidStateError("all amplitudes are zero")
    return int(np.argmax(absval))


def peak_location(wf: DickeWaveFunction) -> float:
    """Peak of ``|psi|`` refined by a 3-point quadratic fit of ``ln|psi|``."""
    a = np.abs(wf.amplitudes)
    k = _peak_index(a)
    N = wf.N
    n_ref = float(k)
    if 0 < k < N and a[k - 1] > 0 and a[k + 1] > 0:
        lm, l0, lp = math.log(a[k - 1]), math.log(a[k]), math.log(a[k + 1])
        curv = lm - 2.0 * l0 + lp
        if curv < 0:
            n_ref = k + 0.5 * (lm - lp) / curv
    return (2.0 * n_ref - N) / (2.0 * N)


@dataclass(frozen=True)
class LogWaveFunction:
    """``g = -ln|psi| / N`` (min 0) and ``theta = phase / N`` on ``s[lo:hi]``."""

    s: np.ndarray
    g: np.ndarray
    theta: np.ndarray
    lo: int
    hi: int
    peak_index: int


def log_decompose(wf: DickeWaveFunction) -> LogWaveFunction:
    """Split ``psi = exp(-N (g - i theta))`` on the contiguous nonzero window around the peak.

    The phase is unwrapped from the peak outward; zero amplitudes truncate
    the window instead of raising.
    """
    a = np.abs(wf.amplitudes)
    k = _peak_index(a)
    lo = k
    while lo > 0 and a[lo - 1] > 0:
        lo -= 1
    hi = k + 1
    while hi <= wf.N and a[hi] > 0:
        hi += 1
    N = wf.N
    amps = wf.amplitudes[lo:hi]
    g = -np.log(np.abs(amps)) / N
    g -= g.min()
    phase = np.angle(amps)
    kk = k - lo
    right = np.unwrap(phase[kk:])
    left = np.unwrap(phase[kk::-1])[::-1]
    unwrapped = np.concatenate([left[:-1], right])
    s = wf.s[lo:hi]
    return LogWaveFunction(s, g, unwrapped / N, lo, hi, k)


def momentum_estimate(wf: DickeWaveFunction) -> float:
    """Slope of ``theta`` at the refined peak (the classical momentum)."""
    dec = log_decompose(wf)
    kk = dec.peak_index - dec.lo
    th = dec.theta
    if kk == 0 or kk == th.size - 1:
        return 0.0 if th.size < 2 else float(np.gradient(th, dec.s)[kk])
    ds = 1.0 / wf.N
    d1 = (th[kk + 1] - th[kk - 1]) / (2.0 * ds)
    d2 = (th[kk + 1] - 2.0 * th[kk] + th[kk - 1]) / (ds * ds)
    return float(d1 + d2 * (peak_location(wf) - dec.s[kk]))


@dataclass(frozen=True)
class PathRecord:
    t: float
    s_bar: float
    p_bar: float
    wf: DickeWaveFunction | None = None


def evolve_path(wf0: DickeWaveFunction, params: ModelParams, path: WienerPath, record_times,
                snapshots: bool = False) -> list[PathRecord]:
    """Run ``step_prenormalized`` along ``path`` and record the peak at ``record_times``."""
    if params.N != wf0.N and params.N != 1:
        raise ConfigurationError(f"params.N={params.N} does not match the state (N={wf0.N})")
    grid = path.grid
    idx = sorted(set(int(i) for i in grid.indices_of(list(record_times))))
    records: list[PathRecord] = []
    if not idx:
        return records
    wf = wf0.copy()
    dt = grid.dt
    r = 0
    for i in range(idx[-1] + 1):
        if i > 0:
            wf = step_prenormalized(wf, params, path.increments[i - 1], dt)
        if i == idx[r]:
            records.append(PathRecord(i * dt, peak_location(wf), momentum_estimate(wf),
                                      wf.copy() if snapshots else None))
            r += 1
    return records
