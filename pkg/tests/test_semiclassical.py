import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import trapezoid

from rnh_ssb import exact
from rnh_ssb.errors import ConfigurationError, DomainError
from rnh_ssb.params import ModelParams
from rnh_ssb.semiclassical import (EPS_CLAMP, PhasePoint, ftilde, ftilde_taylor, integrate_sde,
                                   perturbative_path, perturbative_trajectory, sde_step,
                                   sde_trajectory, taylor_coefficients_h0)
from rnh_ssb.stochastic import (RngSeed, TimeGrid, convergence_pair, from_increments,
                                generate_wiener_path)


def test_ftilde_values():
    assert ftilde(0.3, 0.0) == pytest.approx(0.3, abs=1e-15)
    assert ftilde_taylor(0.0, 0.2) == (0.0, -0.0, -0.0)
    with pytest.raises(DomainError):
        ftilde(0.2, 0.5)
    with pytest.raises(DomainError):
        ftilde_taylor(0.2, -0.5)


@pytest.mark.parametrize("s", [-0.3, 0.0, 0.3])
def test_ftilde_derivatives_fd(s):
    h = 0.2
    e = 1e-5
    f0, f1, f2 = ftilde_taylor(h, s)
    assert f0 == ftilde(h, s)
    assert f1 == pytest.approx((ftilde(h, s + e) - ftilde(h, s - e)) / (2 * e), abs=1e-8)
    d1 = lambda x: ftilde_taylor(h, x)[1]
    assert f2 == pytest.approx((d1(s + e) - d1(s - e)) / (2 * e), abs=1e-7)


def test_coefficient_forms_agree():
    for h in np.linspace(0.05, 1.0, 9):
        for s in np.linspace(-0.49, 0.49, 41):
            main = 4 * h * h * s / ftilde(h, s)
            si = 2 * h * s / math.sqrt(0.25 - s * s)
            assert main == pytest.approx(si, rel=1e-12, abs=1e-15)


def test_taylor_coefficients_at_zero():
    c = taylor_coefficients_h0(1.0, 0.2, 3.0, 0.0)
    assert (c.g2, c.g3, c.theta3) == (2.0, 0.0, 0.0)
    assert c.theta2 == pytest.approx(8 * 0.2 * 3.0)
    assert taylor_coefficients_h0(1.0, 0.0, 3.0, 0.4).theta2 == 0.0


@pytest.mark.parametrize("W", [-0.4, 0.1, 0.35])
def test_taylor_coefficients_match_fd(W):
    gamma, J, t = 1.0, 0.1, 1.0
    s0 = exact.peak_exact(gamma, W)
    g = lambda s: exact.log_wavefunction_exact(gamma, J, t, W, s)[0]
    th = lambda s: exact.log_wavefunction_exact(gamma, J, t, W, s)[1]
    e = 1e-3
    # five-point stencils
    d2 = lambda f: (-f(s0 + 2 * e) + 16 * f(s0 + e) - 30 * f(s0) + 16 * f(s0 - e) - f(s0 - 2 * e)) / (12 * e * e)
    d3 = lambda f: (f(s0 + 2 * e) - 2 * f(s0 + e) + 2 * f(s0 - e) - f(s0 - 2 * e)) / (2 * e**3)
    c = taylor_coefficients_h0(gamma, J, t, W)
    assert c.g2 == pytest.approx(d2(g), rel=1e-6)
    assert c.g3 == pytest.approx(d3(g), rel=1e-4, abs=1e-5)
    assert c.theta2 == pytest.approx(d2(th), rel=1e-6)
    assert c.g2 >= 2


def test_taylor_coefficients_saturate_without_overflow():
    c = taylor_coefficients_h0(1.0, 0.1, 1.0, 500.0)
    assert math.isinf(c.g2) and c.g3 > 0
    c = taylor_coefficients_h0(1.0, 0.1, 1.0, 20.0)
    assert math.isfinite(c.g2) and math.isfinite(c.g3)


def test_sde_step_python_matches_compiled():
    params = ModelParams(1.0, 0.1, 0.2)
    path = generate_wiener_path(TimeGrid.from_t_max(2.0), RngSeed(1, 1))
    T = path.tanh_tilde(1.0)
    pt = PhasePoint(0.0, 0.0)
    for i in range(path.grid.n_steps):
        pt = sde_step(pt, params, i * path.grid.dt, T[i + 1] - T[i], path.grid.dt)
    _, s, p = sde_trajectory(params, path)
    assert pt.s_bar == s[-1] and pt.p_bar == p[-1]


def test_sde_h0_telescopes_to_exact():
    params = ModelParams(1.0, 0.0, 0.0)
    for k in range(10):
        path = generate_wiener_path(TimeGrid.from_t_max(1.0), RngSeed(2, k))
        (t, pt), = integrate_sde(params, path, [1.0])
        assert pt.s_bar == pytest.approx(exact.peak_exact(1.0, path.cumulative[-1]), abs=1e-12)
        assert pt.p_bar == 0.0


def test_sde_h0_momentum_zeroth_order():
    J = 0.2
    params = ModelParams(1.0, J, 0.0)
    for k in range(20):
        path = generate_wiener_path(TimeGrid.from_t_max(1.0, 1e-4), RngSeed(3, k))
        t, s, p = sde_trajectory(params, path)
        T = path.tanh_tilde(1.0)
        assert np.max(np.abs(p - 4 * J * t * T)) < 1e-2


def test_integrate_sde_contracts():
    params = ModelParams(1.0, 0.1, 0.2)
    empty = from_increments(np.zeros(0), 1e-3)
    assert integrate_sde(params, empty, []) == [(0.0, PhasePoint(0.0, 0.0))]
    path = generate_wiener_path(TimeGrid.from_t_max(1.0), RngSeed(4, 0))
    with pytest.raises(ConfigurationError):
        integrate_sde(params, path, [0.0005])
    a = integrate_sde(params, path, [0.5, 1.0])
    b = integrate_sde(params, path.negated(), [0.5, 1.0])
    for (_, x), (_, y) in zip(a, b):
        assert x.s_bar == -y.s_bar and x.p_bar == -y.p_bar


def test_sde_bound_preserved():
    params = ModelParams(1.0, 0.2, 0.3)
    for k in range(30):
        path = generate_wiener_path(TimeGrid.from_t_max(10.0), RngSeed(5, k))
        _, s, p = sde_trajectory(params, path)
        assert np.max(np.abs(s)) <= 0.5 - EPS_CLAMP
        assert np.all(np.isfinite(p))


def test_sde_clamp_at_boundary():
    params = ModelParams(1.0, 0.1, 0.2)
    pt = sde_step(PhasePoint(0.5 - 2e-9, 0.0), params, 0.0, 0.1, 1e-3)
    assert pt.s_bar == 0.5 - EPS_CLAMP
    with pytest.raises(DomainError):
        sde_step(PhasePoint(0.5, 0.0), params, 0.0, 0.0, 1e-3)


def test_sde_dt_convergence():
    params = ModelParams(1.0, 0.1, 0.2)
    dt = 2e-3
    diffs = []
    for k in range(20):
        coarse, fine = convergence_pair(TimeGrid.from_t_max(1.0, dt), RngSeed(6, k))
        a = integrate_sde(params, coarse, [1.0])[0][1].s_bar
        b = integrate_sde(params, fine, [1.0])[0][1].s_bar
        diffs.append(abs(a - b))
    C = max(diffs) / math.sqrt(dt)
    print(f"measured step-halving constant C = {C:.3f}")
    assert C < 1.0


def test_perturbative_reductions():
    path = generate_wiener_path(TimeGrid.from_t_max(2.0), RngSeed(7, 0))
    p0 = perturbative_path(ModelParams(1.0, 0.1, 0.0), path, 2.0)
    T = path.tanh_tilde(1.0)[-1]
    assert p0.s_bar == 0.5 * T and p0.p_bar == pytest.approx(4 * 0.1 * 2.0 * T, rel=1e-15)
    z = perturbative_path(ModelParams(1.0, 0.1, 0.2), from_increments(np.zeros(100), 0.01), 1.0)
    assert z == PhasePoint(0.0, 0.0, False)
    a = perturbative_path(ModelParams(1.0, 0.1, 0.2), path, 2.0, order=0)
    assert a.s_bar == p0.s_bar


def test_perturbative_matches_numpy_trapezoid():
    params = ModelParams(1.0, 0.1, 0.2)
    path = generate_wiener_path(TimeGrid.from_t_max(1.5), RngSeed(8, 0))
    t = path.times
    T = np.tanh(2 * path.cumulative)
    integrand_s = np.sqrt(1 - T * T) * np.sin(4 * params.J * t * T)
    integrand_p = T / np.sqrt(1 - T * T) * np.cos(4 * params.J * t * T)
    integrand_p[0] = 0.0
    s_ref = 0.5 * T[-1] - params.h * trapezoid(integrand_s, t)
    p_ref = 4 * params.J * t[-1] * T[-1] + 2 * params.h * trapezoid(integrand_p, t)
    pt = perturbative_path(params, path, 1.5)
    assert pt.s_bar == pytest.approx(s_ref, abs=1e-10)
    assert pt.p_bar == pytest.approx(p_ref, abs=1e-9)


def test_perturbative_flags_unphysical():
    # W held at -0.5: s = -T0/2 + h sech(1) (1 - cos(a t)) / a with a = 4 J T0,
    # which exceeds 1/2 for h = 1, J = 0.3 around a t = pi
    path = from_increments(np.r_[-0.5, np.zeros(399)], 0.01)
    params = ModelParams(1.0, 0.3, 1.0)
    pt = perturbative_path(params, path, 3.4)
    assert pt.unphysical and pt.s_bar == 0.5 - EPS_CLAMP
    t, s, p, flag = perturbative_trajectory(params, path)
    assert np.all(np.abs(s) <= 0.5)
    assert flag.any() and not flag[:50].any()
    assert np.all(np.abs(s[flag]) == 0.5 - EPS_CLAMP)


@given(st.floats(0, 0.5), st.floats(0, 0.5), st.integers(0, 50))
def test_path_negation_mirrors_all_solvers(h, J, k):
    params = ModelParams(1.0, J, h)
    path = generate_wiener_path(TimeGrid(0.01, 200), RngSeed(9, k))
    _, s1, p1 = sde_trajectory(params, path)
    _, s2, p2 = sde_trajectory(params, path.negated())
    assert np.array_equal(s1, -s2) and np.array_equal(p1, -p2)
    _, s1, p1, f1 = perturbative_trajectory(params, path)
    _, s2, p2, f2 = perturbative_trajectory(params, path.negated())
    assert np.array_equal(s1, -s2) and np.array_equal(p1, -p2) and np.array_equal(f1, f2)


def test_perturbative_unphysical_rate_reported():
    params = ModelParams(1.0, 0.1, 0.2)
    grid = TimeGrid.from_t_max(4.2)
    flags = [perturbative_path(params, generate_wiener_path(grid, RngSeed(10, k)), 4.2).unphysical
             for k in range(400)]
    rate = float(np.mean(flags))
    print(f"perturbative unphysical fraction at h=0.2, J=0.1, t=4.2: {rate:.3f}")
    assert 0.0 <= rate < 0.5
