import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from solwave.model import (DegenerateParametrization, DomainError, FieldState, Grid,
                           NonlinearCoupling, NoSolitaryWave, SpectralCase, ZeroMuError,
                           check_spectral_condition, coupling_eval, mu_omega, solitary_from_C,
                           solitary_from_omega, tangent_frame)


def poly(*c):
    return NonlinearCoupling.polynomial(c)


@pytest.mark.parametrize("coeffs, s, expected", [
    ((1, 1), 1.0, (2.0, 1.0)),
    ((2,), 7.3, (2.0, 0.0)),
    ((-1, 2), 1.44, (1.88, 2.0)),
])
def test_coupling_eval(coeffs, s, expected):
    assert coupling_eval(poly(*coeffs), s) == pytest.approx(expected, abs=1e-14)


@pytest.mark.parametrize("s", [-1.0, math.nan, math.inf])
def test_coupling_eval_rejects_bad_argument(s):
    with pytest.raises(DomainError):
        coupling_eval(poly(1, 1), s)


@given(st.lists(st.floats(-3, 3), min_size=1, max_size=5), st.floats(0.05, 4.0))
def test_polynomial_derivative_matches_central_difference(coeffs, s):
    c = poly(*coeffs)
    eps = 1e-6 * max(1.0, s)
    fd = (c.a(s + eps) - c.a(s - eps)) / (2 * eps)
    assert abs(fd - c.a_prime(s)) <= 1e-8 * max(1.0, abs(c.a_prime(s)), abs(c.a(s)))


def test_tabulated_coupling_reproduces_smooth_function():
    s = np.linspace(0, 4, 81)
    c = NonlinearCoupling.tabulated(s, 1 + s + 0.1 * s ** 2)
    assert c.a(1.3) == pytest.approx(1 + 1.3 + 0.169, rel=1e-6)
    assert c.a_prime(1.3) == pytest.approx(1 + 0.26, rel=1e-4)
    with pytest.raises(DomainError):
        c.a(5.0)


@pytest.mark.parametrize("coeffs, C", [((1, 1), 1.0), ((2,), 5.0), ((0, 1), math.sqrt(2))])
def test_solitary_from_C_unit_frequency(coeffs, C):
    w = solitary_from_C(poly(*coeffs), C)
    assert w.kappa == pytest.approx(1.0, abs=1e-14)
    assert w.omega == pytest.approx(1.0, abs=1e-14)


def test_solitary_rejects_nonpositive_a():
    with pytest.raises(NoSolitaryWave):
        solitary_from_C(poly(-1, 0.5), 1.0)
    with pytest.raises(DomainError):
        solitary_from_C(poly(1, 1), -1.0)


def test_derived_constants(stable_wave):
    w = stable_wave
    assert (w.a, w.b, w.alpha, w.beta) == pytest.approx((2.0, 2.0, 3.0, 1.0))
    assert w.alpha - w.beta == pytest.approx(w.a)


@given(st.floats(0.1, 3.0), st.floats(-0.5, 2.0))
def test_jump_condition_holds(C, slope):
    c = poly(1.0, slope)
    if c.a(C * C) <= 0:
        return
    w = solitary_from_C(c, C)
    # psi'(0+) - psi'(0-) + F(psi(0)) = -2 kappa C + a(C^2) C
    assert abs(-2 * w.kappa * w.C + w.a * w.C) <= 1e-12 * w.a * w.C
    assert abs(w.omega - w.kappa ** 2) <= 1e-12 * w.omega


def test_solitary_from_omega_single_root():
    waves = solitary_from_omega(poly(1, 1), 1.0, (0.1, 10))
    assert [w.C for w in waves] == pytest.approx([1.0], abs=1e-12)


def test_solitary_from_omega_constant_coupling_is_degenerate():
    with pytest.raises(DegenerateParametrization, match="degenerate"):
        solitary_from_omega(poly(2.0), 1.0, (0.1, 10))


def test_solitary_from_omega_multiple_roots():
    # a(C^2) = 2 for a(s) = s^2 - 3s + 3 means s^2 - 3s + 1 = 0
    c = poly(3, -3, 1)
    waves = solitary_from_omega(c, 1.0, (0.1, 10))
    # independent oracle: dense bisection sweep of a(C^2) - 2 over the bracket
    Cs = np.linspace(0.1, 10, 200001)
    f = c.a(Cs ** 2) - 2
    idx = np.nonzero(np.sign(f[:-1]) != np.sign(f[1:]))[0]
    oracle = []
    for i in idx:
        lo, hi = Cs[i], Cs[i + 1]
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if np.sign(c.a(mid ** 2) - 2) == np.sign(c.a(lo ** 2) - 2):
                lo = mid
            else:
                hi = mid
        oracle.append(0.5 * (lo + hi))
    assert [w.C for w in waves] == pytest.approx(oracle, abs=1e-12)
    for w in waves:
        assert abs(c.a(w.C ** 2) - 2) <= 1e-12 * 2


@given(st.floats(0.3, 3.0))
def test_round_trip_C_omega(C):
    c = poly(1, 1)
    w = solitary_from_C(c, C)
    back = solitary_from_omega(c, w.omega, (0.01, 10))
    assert len(back) == 1
    assert back[0].C == pytest.approx(C, rel=1e-12)


def _charge_fd(coupling, wave, step=1e-5):
    def charge(om):
        near = [w for w in solitary_from_omega(coupling, om, (0.5 * wave.C, 2 * wave.C))
                if abs(w.C - wave.C) < 0.1 * wave.C]
        v = near[0]
        g = Grid(60.0 / v.kappa, 60001)
        return g.h * np.sum(v.profile(g.x) ** 2)
    return 0.5 * (charge(wave.omega + step) - charge(wave.omega - step)) / (2 * step)


@pytest.mark.parametrize("coeffs, C", [((1, 1), 1.0), ((-1, 2), 1.2)])
def test_mu_matches_charge_derivative(coeffs, C):
    c = poly(*coeffs)
    w = solitary_from_C(c, C)
    assert mu_omega(w) == pytest.approx(_charge_fd(c, w), abs=1e-6)


def test_mu_values(stable_wave, unstable_wave):
    assert mu_omega(stable_wave) == pytest.approx(0.25, abs=1e-14)
    assert mu_omega(unstable_wave) < 0


def test_mu_errors():
    with pytest.raises(ZeroMuError):
        mu_omega(solitary_from_C(poly(0, 1), math.sqrt(2)))
    with pytest.raises(DegenerateParametrization):
        mu_omega(solitary_from_C(poly(2.0), 1.0))


@settings(max_examples=20)
@given(st.floats(0.3, 2.0), st.floats(-2.0, 3.0))
def test_mu_sign_sweep(C, slope):
    c = poly(1.0, slope)
    if c.a(C * C) <= 0 or slope == 0:
        return
    w = solitary_from_C(c, C)
    crit = w.a / C ** 2
    if abs(w.a_prime - crit) < 1e-6 * crit:
        return
    expected = 0 < w.a_prime < crit
    assert (mu_omega(w) > 0) == expected


def test_tangent_frame_closed_form(stable_wave, linear_coupling):
    g = Grid(20, 801)
    T0, T1 = tangent_frame(stable_wave, g)
    assert np.allclose(T0.values, 1j * np.exp(-np.abs(g.x)), atol=1e-15)
    d = 1e-5
    up = solitary_from_omega(linear_coupling, 1 + d, (0.5, 2))[0]
    dn = solitary_from_omega(linear_coupling, 1 - d, (0.5, 2))[0]
    fd = (up.profile(g.x) - dn.profile(g.x)) / (2 * d)
    assert np.max(np.abs(fd - T1.values.real)) <= 1e-6


def test_frame_solves_derivative_equation(stable_wave):
    # (-d^2 + omega) d_omega psi = -psi away from the origin, to O(h^2)
    errs = []
    for n in (801, 1601):
        g = Grid(20, n)
        _, T1 = tangent_frame(stable_wave, g)
        v = T1.values.real
        lhs = -(v[2:] - 2 * v[1:-1] + v[:-2]) / g.h ** 2 + stable_wave.omega * v[1:-1]
        res = lhs + stable_wave.profile(g.x[1:-1])
        mask = np.abs(g.x[1:-1]) > 2.5 * g.h
        errs.append(np.max(np.abs(res[mask])))
    assert errs[1] < errs[0] / 3.5
    assert errs[0] < 5 * g.h ** 2 * 4


@pytest.mark.parametrize("coeffs, C, case", [
    ((1, 1), 1.0, SpectralCase.STABLE_I),
    ((1, 1), 2.0, SpectralCase.OSCILLATORY_II),
    ((0, 1), math.sqrt(2), SpectralCase.DEGENERATE_III),
    ((-1, 2), 1.2, SpectralCase.UNSTABLE_IV),
    ((2,), 1.0, SpectralCase.ZERO_PRIME),
])
def test_spectral_condition(coeffs, C, case):
    assert check_spectral_condition(solitary_from_C(poly(*coeffs), C)) == case


def test_grid_and_field_validation():
    g = Grid(10, 21)
    assert g.x[g.origin] == 0.0
    assert g.h == pytest.approx(1.0)
    with pytest.raises(DomainError):
        Grid(10, 20)
    with pytest.raises(DomainError):
        FieldState(g, np.zeros(5))
    with pytest.raises(DomainError):
        FieldState(g, np.full(21, np.nan))
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        Grid(5, 11).check_decay(1.0)
    assert rec


def test_default_grid_resolves_tails(stable_wave):
    g = Grid.for_wave(stable_wave)
    assert math.exp(-stable_wave.kappa * g.L) <= 1e-12
    assert g.n == 4001
