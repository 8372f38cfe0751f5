import math
from functools import reduce
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.linalg import expm

from rnh_ssb import dicke, exact
from rnh_ssb.errors import CapacityError, ConfigurationError, InvalidStateError
from rnh_ssb.params import ModelParams
from rnh_ssb.stochastic import RngSeed, TimeGrid, from_increments, generate_wiener_path
from rnh_ssb.validation import brute_force_two_spins, normalized_vs_linear

SX = np.array([[0.0, 1.0], [1.0, 0.0]])
SZ = np.diag([1.0, -1.0])


def _collective(N, op):
    eye = np.eye(2)
    total = 0
    for j in range(N):
        total = total + reduce(np.kron, [op if k == j else eye for k in range(N)])
    return total


def _dicke_basis(N):
    """Columns: normalized symmetric states with n up spins (|up> = first basis vector)."""
    B = np.zeros((2**N, N + 1))
    for n in range(N + 1):
        for ups in combinations(range(N), n):
            idx = sum(1 << (N - 1 - j) for j in range(N) if j not in ups)
            B[idx, n] = 1.0
        B[:, n] /= math.sqrt(math.comb(N, n))
    return B


def test_init_plus_x_small():
    np.testing.assert_allclose(dicke.init_plus_x(1).amplitudes, [2**-0.5, 2**-0.5], atol=1e-15)
    np.testing.assert_allclose(dicke.init_plus_x(2).amplitudes, [0.5, 2**-0.5, 0.5], atol=1e-15)
    wf = dicke.init_plus_x(30)
    assert np.argmax(np.abs(wf.amplitudes)) == 15
    assert np.array_equal(wf.amplitudes, wf.amplitudes[::-1])
    assert dicke.peak_location(wf) == 0.0


@given(st.integers(1, 3000))
def test_init_plus_x_normalized_symmetric(N):
    a = dicke.init_plus_x(N).amplitudes
    assert np.sum(np.abs(a) ** 2) == pytest.approx(1.0, abs=1e-12)
    assert np.array_equal(a, a[::-1])
    assert np.all(a.real >= 0) and np.all(a.imag == 0)


def test_init_capacity():
    with pytest.raises(CapacityError):
        dicke.init_plus_x(dicke.MAX_DENSE_N + 1)
    with pytest.raises(ConfigurationError):
        dicke.init_plus_x(0)


@pytest.mark.parametrize("N", [1, 2, 3, 4])
def test_operators_match_full_space(N):
    ops = dicke.CollectiveOperators.build(N)
    B = _dicke_basis(N)
    np.testing.assert_allclose(B.T @ _collective(N, SX) @ B, ops.sx_dense(), atol=1e-12)
    np.testing.assert_allclose(B.T @ _collective(N, SZ) @ B, np.diag(ops.sz_diag), atol=1e-12)
    # the symmetric sector is invariant
    P = B @ B.T
    Sx = _collective(N, SX)
    np.testing.assert_allclose(P @ Sx @ B, Sx @ B, atol=1e-12)
    # plus-x product state is init_plus_x
    plus = reduce(np.kron, [np.array([1.0, 1.0]) / math.sqrt(2)] * N)
    np.testing.assert_allclose(B.T @ plus, dicke.init_plus_x(N).amplitudes.real, atol=1e-12)


def test_sx_structure():
    ops = dicke.operators(7)
    M = ops.sx_dense()
    assert np.array_equal(M, M.T) and np.all(np.diag(M) == 0)
    assert np.count_nonzero(np.triu(M, 2)) == 0


@pytest.mark.parametrize("N", [5, 40, 300])
def test_expm_sx_apply_matches_dense(N):
    ops = dicke.operators(N)
    rng = np.random.default_rng(N)
    psi = rng.normal(size=N + 1) + 1j * rng.normal(size=N + 1)
    for coeff in (-1j * 0.2 * 1e-3, -1j * 0.05, 0.01):
        ref = expm(coeff * ops.sx_dense()) @ psi
        got = ops.expm_sx_apply(coeff, psi)
        assert np.max(np.abs(got - ref)) < 1e-10 * np.max(np.abs(ref))


def test_step_identity_when_free():
    wf = dicke.init_plus_x(10)
    out = dicke.step_prenormalized(wf, ModelParams(0.0, 0.0, 0.0, 10), 0.3, 1e-3)
    np.testing.assert_allclose(out.amplitudes * math.exp(out.norm_log), wf.amplitudes, atol=1e-15)


def test_step_h0_closed_form():
    N, gamma, J = 20, 0.7, 0.3
    params = ModelParams(gamma, J, 0.0, N)
    path = generate_wiener_path(TimeGrid(1e-3, 300), RngSeed(1, 0))
    wf0 = dicke.init_plus_x(N)
    wf = wf0
    for dw in path.increments:
        wf = dicke.step_prenormalized(wf, params, dw, 1e-3)
    t, W = path.grid.t_max, path.cumulative[-1]
    s = wf0.s
    expected = wf0.amplitudes * np.exp((2 * N * s) * math.sqrt(gamma) * W + 1j * 4 * J * s * s * N * t)
    got = wf.amplitudes * math.exp(wf.norm_log)
    np.testing.assert_allclose(got, expected, rtol=1e-10)


@given(st.floats(-0.1, 0.1), st.floats(0.0, 0.5), st.floats(0.0, 0.5))
def test_two_spin_brute_force(dW, h, J):
    assert brute_force_two_spins(dW, 1e-3, ModelParams(1.0, J, h, N=2)).passed


def test_two_spin_brute_force_default():
    r = brute_force_two_spins()
    assert r.value < 1e-6


def test_step_matches_literal_ito_update():
    N, dt = 6, 1e-6
    params = ModelParams(1.0, 0.1, 0.2, N)
    ops = dicke.operators(N)
    H0 = -(params.J / N) * np.diag(ops.sz_diag**2) + params.h * ops.sx_dense()
    V = np.diag(ops.sz_diag)
    wf = dicke.init_plus_x(N)
    errs = []
    for dt in (1e-4, 1e-6):
        dW = math.sqrt(dt)
        phi = wf.amplitudes
        literal = phi + (-1j * H0 * dt + V * dW + 0.5 * V @ V * dt) @ phi
        out = dicke.step_prenormalized(wf, params, dW, dt)
        errs.append(np.max(np.abs(out.amplitudes * math.exp(out.norm_log) - literal)))
    # the remainder is O(dt^(3/2)): a 100x smaller dt shrinks it ~1000x
    assert errs[1] < errs[0] / 300
    assert errs[1] < 100 * 1e-6**1.5 * N**3


def test_normalized_step_eigenstate_fixed_point():
    N = 6
    amps = np.zeros(N + 1, complex)
    amps[4] = 1.0
    wf = dicke.DickeWaveFunction(N, amps)
    out = dicke.normalized_step(wf, ModelParams(1.0, 0.0, 0.0, N), 0.05, 1e-3)
    np.testing.assert_allclose(out.amplitudes, amps, atol=1e-15)


def test_normalized_step_symmetric_noise_term():
    N = 6
    wf = dicke.init_plus_x(N)
    params = ModelParams(1.0, 0.0, 0.0, N)
    v = dicke.operators(N).sz_diag
    assert np.dot(np.abs(wf.amplitudes) ** 2, v) == pytest.approx(0.0, abs=1e-14)
    out = dicke.normalized_step(wf, params, 0.01, 0.0)
    ref = wf.amplitudes * (1 + 0.01 * v)
    np.testing.assert_allclose(out.amplitudes, ref / np.linalg.norm(ref), atol=1e-15)


def test_normalized_step_converges_to_linear():
    fine = normalized_vs_linear(dt=1e-6, t_max=0.01)
    coarse = normalized_vs_linear(dt=1e-4, t_max=0.01)
    assert fine.value < coarse.value
    mil = normalized_vs_linear(dt=1e-5, t_max=0.01, scheme="milstein")
    assert mil.value < 1e-3
    with pytest.raises(ConfigurationError):
        dicke.normalized_step(dicke.init_plus_x(2), ModelParams(N=2), 0.0, 1e-3, scheme="rk4")


def test_peak_location_cases():
    N = 30
    n = np.arange(N + 1)
    wf = dicke.DickeWaveFunction(N, np.exp(-((n - 20.0) ** 2)).astype(complex))
    assert dicke.peak_location(wf) == pytest.approx(1 / 6, abs=1e-6)
    wf = dicke.DickeWaveFunction(N, np.exp(-((n - 20.3) ** 2) / 8).astype(complex))
    assert dicke.peak_location(wf) == pytest.approx((2 * 20.3 - N) / (2 * N), abs=1e-9)
    edge = np.zeros(N + 1, complex)
    edge[-1], edge[-2] = 1.0, 0.9
    assert dicke.peak_location(dicke.DickeWaveFunction(N, edge)) == 0.5
    with pytest.raises(InvalidStateError):
        dicke.peak_location(dicke.DickeWaveFunction(N, np.zeros(N + 1)))


def test_h0_peak_tracks_exact():
    N = 200
    params = ModelParams(1.0, 0.0, 0.0, N)
    grid = TimeGrid.from_t_max(1.0)
    times = [0.1 * k for k in range(1, 11)]
    for i in range(20):
        path = generate_wiener_path(grid, RngSeed(21, i))
        for rec in dicke.evolve_path(dicke.init_plus_x(N), params, path, times):
            W = path.cumulative[grid.index_of(rec.t)]
            s_exact = exact.peak_exact(1.0, W)
            err = abs(rec.s_bar - s_exact)
            # near s = +-1/2 the binomial weight shifts the discrete argmax by O(1) sites
            assert err <= 2 / N
            if abs(s_exact) < 0.45:
                assert err <= 1 / (2 * N) + 1e-3


def test_log_decompose_real_positive():
    dec = dicke.log_decompose(dicke.init_plus_x(50))
    assert np.all(dec.theta == 0)
    assert dec.g.min() == 0.0 and dec.lo == 0 and dec.hi == 51


def test_log_decompose_h0_closed_form():
    N, gamma, J = 100, 1.0, 0.1
    path = from_increments(np.full(100, 0.003), 1e-3)
    params = ModelParams(gamma, J, 0.0, N)
    wf0 = dicke.init_plus_x(N)
    recs = dicke.evolve_path(wf0, params, path, [0.1], snapshots=True)
    dec = dicke.log_decompose(recs[0].wf)
    dec0 = dicke.log_decompose(wf0)
    W, t = path.cumulative[-1], 0.1
    g_ref, th_ref = exact.log_wavefunction_exact(gamma, J, t, W, dec.s[1:-1])
    g0_ref, _ = exact.log_wavefunction_exact(gamma, J, 0.0, 0.0, dec.s[1:-1])
    # time dependence is exact: g(t) - g(0) = -2 sqrt(gamma) s W up to a constant
    diff = (dec.g - dec0.g)[1:-1] - (g_ref - g0_ref)
    assert np.ptp(diff) < 1e-6
    np.testing.assert_allclose(dec.theta[1:-1], th_ref, atol=1e-12)
    # the binomial profile differs from the Stirling form by O(ln N / N)
    stat = dec0.g[1:-1] - g0_ref
    assert np.ptp(stat[10:-10]) < 3 * math.log(N) / N


def test_log_decompose_theta_curvature():
    N, J, t = 400, 0.1, 0.5
    params = ModelParams(1.0, J, 0.0, N)
    path = generate_wiener_path(TimeGrid.from_t_max(t), RngSeed(2, 0))
    wf = dicke.evolve_path(dicke.init_plus_x(N), params, path, [t], snapshots=True)[0].wf
    dec = dicke.log_decompose(wf)
    k = dec.peak_index - dec.lo
    ds = 1 / N
    curv = (dec.theta[k + 1] - 2 * dec.theta[k] + dec.theta[k - 1]) / ds**2
    assert curv == pytest.approx(8 * J * t, rel=0.02)


def test_log_decompose_truncates_at_zero():
    amps = np.array([0, 0.1, 1.0, 0.5, 0, 0.2], complex)
    dec = dicke.log_decompose(dicke.DickeWaveFunction(5, amps))
    assert (dec.lo, dec.hi) == (1, 4)


def test_evolve_path_records():
    params = ModelParams(1.0, 0.1, 0.2, 30)
    path = generate_wiener_path(TimeGrid.from_t_max(0.2), RngSeed(8, 0))
    assert dicke.evolve_path(dicke.init_plus_x(30), params, path, []) == []
    with pytest.raises(ConfigurationError):
        dicke.evolve_path(dicke.init_plus_x(30), params, path, [0.1005])
    recs = dicke.evolve_path(dicke.init_plus_x(30), params, path, [0.0, 0.1])
    assert recs[0].s_bar == 0.0
    assert abs(recs[1].s_bar) > 1 / 60
    again = dicke.evolve_path(dicke.init_plus_x(30), params, path, [0.0, 0.1])
    assert recs == again


def test_reflection_symmetry_under_negated_path():
    params = ModelParams(1.0, 0.15, 0.3, 25)
    path = generate_wiener_path(TimeGrid.from_t_max(0.3), RngSeed(5, 5))
    a = dicke.evolve_path(dicke.init_plus_x(25), params, path, [0.3], snapshots=True)[0]
    b = dicke.evolve_path(dicke.init_plus_x(25), params, path.negated(), [0.3], snapshots=True)[0]
    np.testing.assert_allclose(a.wf.normalize().amplitudes, b.wf.normalize().reflected().amplitudes,
                               atol=1e-10)
    assert a.s_bar == -b.s_bar


def test_norm_bookkeeping_and_dt_refinement():
    from rnh_ssb.stochastic import convergence_pair
    params = ModelParams(1.0, 0.1, 0.2, 30)
    coarse, fine = convergence_pair(TimeGrid.from_t_max(0.5, 2e-3), RngSeed(6, 0))
    out = []
    for path in (coarse, fine):
        rec = dicke.evolve_path(dicke.init_plus_x(30), params, path, [0.5], snapshots=True)[0]
        out.append((rec.s_bar, rec.wf.log_norm()))
    assert all(math.isfinite(x[1]) for x in out)
    assert abs(out[0][1] - out[1][1]) < 1e-2 * max(1.0, abs(out[0][1]))
    # first-order splitting: final peak moves by less than C dt with C = 5
    assert abs(out[0][0] - out[1][0]) < 5 * 2e-3
