"""Cross-solver property checks shared by the ``validate`` command and the test suite.

Each check returns a :class:`CheckResult` holding the measured quantity and
the threshold it is held to.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from . import dicke, fokker_planck as fp
from .ensemble import EnsembleConfig, run_ensemble, symmetry_defect
from .params import ModelParams
from .semiclassical import PhasePoint, integrate_sde, perturbative_trajectory, sde_trajectory
from .stochastic import RngSeed, TimeGrid, generate_wiener_path


@dataclass(frozen=True)
class CheckResult:
    name: str
    value: float
    threshold: float
    passed: bool

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag} {self.name}: {self.value:.3e} (threshold {self.threshold:.1e})"


def _check(name, value, threshold, below=True) -> CheckResult:
    value = float(value)
    ok = value < threshold if below else value > threshold
    return CheckResult(name, value, threshold, bool(ok))


def symmetry_all_methods(n: int = 20000, t: float = 1.0, seed: int = 11, threads=None) -> list[CheckResult]:
    """Statistical Z2 symmetry of the sampled peak law for every method."""
    out = []
    params = ModelParams(1.0, 0.1, 0.2)
    grid = TimeGrid.from_t_max(t, 1e-3)
    for method in ("exact", "sde", "perturbative"):
        cfg = EnsembleConfig(method, params, n, seed, grid, (0.5 * t, t))
        for ss in run_ensemble(cfg, threads):
            out.append(_check(f"z2 symmetry {method} t={ss.time}", symmetry_defect(ss), 4 / math.sqrt(n)))
    wf_n = 40
    cfg = EnsembleConfig("wavefunction", params.replace(N=20), wf_n, seed, TimeGrid.from_t_max(0.5, 1e-3), (0.5,))
    ss = run_ensemble(cfg)[0]
    out.append(_check("z2 symmetry wavefunction t=0.5", symmetry_defect(ss), 4 / math.sqrt(wf_n)))
    return out


def negation_mirroring(seed: int = 3) -> list[CheckResult]:
    """Negated paths give exactly negated trajectories / reflected states."""
    params = ModelParams(1.0, 0.1, 0.2, N=30)
    path = generate_wiener_path(TimeGrid.from_t_max(2.0), RngSeed(seed, 0))
    neg = path.negated()
    _, s1, p1 = sde_trajectory(params, path)
    _, s2, p2 = sde_trajectory(params, neg)
    sde_err = max(np.max(np.abs(s1 + s2)), np.max(np.abs(p1 + p2)))
    _, s1, p1, _ = perturbative_trajectory(params, path)
    _, s2, p2, _ = perturbative_trajectory(params, neg)
    pert_err = max(np.max(np.abs(s1 + s2)), np.max(np.abs(p1 + p2)))
    short = generate_wiener_path(TimeGrid.from_t_max(0.2), RngSeed(seed, 1))
    wa = wb = dicke.init_plus_x(params.N)
    for dw in short.increments:
        wa = dicke.step_prenormalized(wa, params, dw, short.grid.dt)
        wb = dicke.step_prenormalized(wb, params, -dw, short.grid.dt)
    wf_err = np.max(np.abs(wa.normalize().amplitudes - wb.normalize().reflected().amplitudes))
    return [CheckResult("path negation sde (exact)", float(sde_err), 0.0, sde_err == 0),
            CheckResult("path negation perturbative (exact)", float(pert_err), 0.0, pert_err == 0),
            _check("path negation wavefunction", wf_err, 1e-10)]


def liouville_divergence() -> list[CheckResult]:
    s = np.linspace(-0.45, 0.45, 61)
    p = np.linspace(-math.pi, math.pi, 61)
    S, P = np.meshgrid(s, p, indexing="ij")
    out = []
    for h, J in ((0.2, 0.1), (0.3, 0.2), (0.0, 0.2)):
        div = fp.divergence_fd(S, P, ModelParams(1.0, J, h))
        out.append(_check(f"liouville divergence h={h} J={J}", np.max(np.abs(div)), 1e-6))
    return out


def hamiltonian_conservation(t_max: float = 10.0, dt: float = 1e-3) -> CheckResult:
    params = ModelParams(1.0, 0.1, 0.2)
    _, s, p = fp.integrate_flow(PhasePoint(0.1, 0.3), params, t_max, dt)
    H = fp.hamiltonian_sp(s, p, params)
    return _check("hamiltonian conservation t=10", np.max(np.abs(H - H[0])) / abs(H[0]), 1e-6)


def uniform_stationarity(n_steps: int = 200) -> list[CheckResult]:
    params = ModelParams(1.0, 0.1, 0.2)
    grid = fp.DensityGrid.uniform(128, 128)
    out = []
    for limiter in (False, True):
        dt = 2.5e-3 if limiter else 5e-3
        end = fp.evolve_density(grid, params, dt, n_steps, limiter=limiter)
        dev = np.max(np.abs(end.values - grid.values)) / grid.values[0, 0]
        out.append(_check(f"uniform density stationary (limiter={limiter}) per step", dev / n_steps, 1e-8))
    return out


def _two_spin_ops():
    sx = np.array([[0, 1], [1, 0]], dtype=complex)
    sz = np.diag([1.0, -1.0]).astype(complex)
    eye = np.eye(2)
    Sx = np.kron(sx, eye) + np.kron(eye, sx)
    Sz = np.kron(sz, eye) + np.kron(eye, sz)
    # Dicke vectors by number of up spins n = 0, 1, 2 (|up> = (1, 0))
    up, dn = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    basis = np.column_stack([np.kron(dn, dn), (np.kron(up, dn) + np.kron(dn, up)) / math.sqrt(2),
                             np.kron(up, up)])
    return Sx, Sz, basis


def brute_force_two_spins(dW: float = 0.031, dt: float = 1e-3,
                          params: ModelParams = ModelParams(1.0, 0.1, 0.2, N=2)) -> CheckResult:
    """One Dicke step against ``expm(-i H0 dt + V dW)`` in the full 4-dim space."""
    Sx, Sz, B = _two_spin_ops()
    H0 = -(params.J / 2) * Sz @ Sz + params.h * Sx
    U = expm(-1j * H0 * dt + math.sqrt(params.gamma) * Sz * dW)
    wf = dicke.init_plus_x(2)
    full = U @ (B @ wf.amplitudes)
    ref = B.conj().T @ full
    got = dicke.step_prenormalized(wf, params, dW, dt)
    got_amps = got.amplitudes * math.exp(got.norm_log)
    return _check("N=2 brute-force operator exponential", np.max(np.abs(got_amps - ref)), 1e-6)


def normalized_vs_linear(N: int = 8, t_max: float = 0.1, dt: float = 1e-4, seed: int = 5,
                         params: ModelParams | None = None, scheme: str = "euler") -> CheckResult:
    """Nonlinear normalized evolution against linear evolution followed by normalization."""
    params = params or ModelParams(1.0, 0.1, 0.2, N=N)
    path = generate_wiener_path(TimeGrid.from_t_max(t_max, dt), RngSeed(seed, 0))
    lin = nl = dicke.init_plus_x(N)
    worst = 0.0
    for dw in path.increments:
        lin = dicke.step_prenormalized(lin, params, dw, dt)
        nl = dicke.normalized_step(nl, params, dw, dt, scheme)
        a = lin.normalize().amplitudes
        worst = max(worst, float(np.max(np.abs(a - nl.amplitudes))))
    return _check(f"nonlinear {scheme} step vs linear-then-normalize N={N}", worst, 1e-3)


def thread_determinism(n: int = 2000, seed: int = 9) -> CheckResult:
    params = ModelParams(1.0, 0.1, 0.2)
    grid = TimeGrid.from_t_max(1.0)
    worst = 0
    for method in ("exact", "sde", "perturbative"):
        cfg = EnsembleConfig(method, params, n, seed, grid, (0.5, 1.0))
        a = run_ensemble(cfg, threads=1)
        b = run_ensemble(cfg, threads=4)
        worst += sum(not x.identical_to(y) for x, y in zip(a, b))
    return CheckResult("thread-count bit determinism", float(worst), 0.0, worst == 0)


def exact_vs_sde_h0(seed: int = 2) -> CheckResult:
    params = ModelParams(1.0, 0.2, 0.0)
    worst = 0.0
    for k in range(5):
        path = generate_wiener_path(TimeGrid.from_t_max(2.0), RngSeed(seed, k))
        rec = integrate_sde(params, path, [1.0, 2.0])
        for t, pt in rec:
            W = path.cumulative[path.grid.index_of(t)]
            worst = max(worst, abs(pt.s_bar - 0.5 * math.tanh(2.0 * W)))
    return _check("exact vs sde at h=0", worst, 1e-10)


def property_suite(n_symmetry: int = 20000, threads=None) -> list[CheckResult]:
    """Every always-on invariant; runs in well under a minute."""
    res = symmetry_all_methods(n_symmetry, threads=threads)
    res += negation_mirroring()
    res += liouville_divergence()
    res.append(hamiltonian_conservation())
    res += uniform_stationarity()
    res.append(brute_force_two_spins())
    res.append(normalized_vs_linear())
    res.append(thread_determinism())
    res.append(exact_vs_sde_h0())
    return res
