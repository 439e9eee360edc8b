import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from solwave import linops
from solwave.model import (DomainError, FieldState, Grid, NonlinearCoupling, mu_omega,
                           solitary_from_C, tangent_frame)

from conftest import gaussian


SMALL = Grid(12.0, 241)
coef = st.floats(-2, 2, allow_nan=False)


def field_from(cs, grid=SMALL):
    x = grid.x
    basis = [np.exp(-x ** 2), x * np.exp(-x ** 2), np.exp(-np.abs(x)), np.exp(-(x - 1) ** 2 / 2)]
    re = sum(c * b for c, b in zip(cs[:4], basis))
    im = sum(c * b for c, b in zip(cs[4:], basis))
    return FieldState(grid, re + 1j * im)


@given(st.lists(coef, min_size=8, max_size=8), st.lists(coef, min_size=8, max_size=8))
def test_symplectic_antisymmetry(a, b):
    psi, eta = field_from(a), field_from(b)
    assert linops.symplectic_form(psi, eta) == pytest.approx(-linops.symplectic_form(eta, psi), abs=1e-12)
    assert abs(linops.symplectic_form(psi, psi)) <= 1e-12


def test_symplectic_grid_mismatch():
    with pytest.raises(DomainError):
        linops.symplectic_form(field_from([1] * 8), field_from([1] * 8, Grid(12.0, 121)))


def test_frame_pairing(stable_wave, stable_grid):
    T0, T1 = tangent_frame(stable_wave, stable_grid)
    assert mu_omega(stable_wave) == pytest.approx(0.25, abs=1e-14)
    assert linops.symplectic_form(T0, T1) == pytest.approx(-0.25, abs=1e-8)
    assert linops.symplectic_form(T0, T0) == 0.0


def test_integrate_sixth_order_through_kink():
    errs = []
    for n in (201, 401):
        g = Grid(30.0, n)
        errs.append(abs(linops.integrate(np.exp(-np.abs(g.x)) * np.cos(g.x), g) - 1.0))
    assert math.log2(errs[0] / errs[1]) >= 5.5


def test_free_flow_gaussian():
    g = Grid(20.0, 2001)
    psi = FieldState(g, np.exp(-g.x ** 2) + 0j)
    for t in (0.1, 1.0, 3.0):
        exact = (1 + 4j * t) ** -0.5 * np.exp(-g.x ** 2 / (1 + 4j * t))
        assert np.max(np.abs(linops.free_flow_grid(psi, t).values - exact)) <= 1e-6
        pt = linops.free_flow_points(psi, [0.0, 1.0], [t])[0]
        assert pt[0] == pytest.approx(exact[g.origin], abs=1e-6)
        # backward flow is the conjugate problem
        back = linops.free_flow_grid(psi, -t).values
        assert np.max(np.abs(back - exact.conj())) <= 1e-6


def test_generator_on_frame(stable_wave):
    errs = []
    for n in (2001, 4001):
        g = Grid.for_wave(stable_wave, n)
        T0, T1 = tangent_frame(stable_wave, g)
        a0 = linops.apply_generator(T0, stable_wave)
        a1 = linops.apply_generator(T1, stable_wave)
        off = np.ones(g.n, bool)
        off[g.origin] = False
        errs.append((np.max(np.abs(a0.smooth.values[off])), abs(a0.delta),
                     np.max(np.abs((a1.smooth - T0).values[off])), abs(a1.delta)))
    errs = np.array(errs)
    assert np.all(errs[1] <= 1e-3)
    # second order in h for every component
    assert np.all(np.log2(errs[0] / errs[1]) >= 1.8)


def test_generator_on_gaussian(stable_wave):
    g = Grid(10.0, 2001)
    x = g.x
    f = np.exp(-x ** 2)
    act = linops.apply_generator(FieldState(g, f + 0j), stable_wave)
    # -i(-f'' + omega f) with f'' = (4x^2 - 2) f
    exact = -1j * (-(4 * x ** 2 - 2) * f + stable_wave.omega * f)
    assert np.max(np.abs(act.smooth.values - exact)) <= 2 * g.h ** 2 * 12
    assert abs(act.kink) <= 1e-5
    assert act.coupling == pytest.approx(1j * (stable_wave.a + stable_wave.b))


def test_projection_frame_and_parity(stable_wave, stable_grid):
    T0, T1 = tangent_frame(stable_wave, stable_grid)
    p = linops.project_p0(T0, stable_wave)
    assert (p.b0, p.b1) == pytest.approx((1, 0), abs=1e-8)
    assert np.max(np.abs(p.transversal.values)) <= 1e-8
    p = linops.project_p0(T1, stable_wave)
    assert (p.b0, p.b1) == pytest.approx((0, 1), abs=1e-8)
    x = stable_grid.x
    odd = FieldState(stable_grid, x * np.exp(-x ** 2) + 1j * np.sin(x) * np.exp(-x ** 2))
    p = linops.project_p0(odd, stable_wave)
    assert (p.b0, p.b1) == pytest.approx((0, 0), abs=1e-14)
    assert np.array_equal(p.transversal.values, odd.values)


@settings(deadline=None, max_examples=30)
@given(st.lists(coef, min_size=8, max_size=8))
def test_projection_orthogonality_and_idempotency(cs):
    wave = solitary_from_C(NonlinearCoupling.polynomial([1.0, 1.0]), 1.0)
    psi = field_from(cs, Grid(30.0, 1201))
    T0, T1 = tangent_frame(wave, psi.grid)
    p = linops.project_p0(psi, wave)
    norm = max(np.max(np.abs(psi.values)), 1e-300)
    for T in (T0, T1):
        scale = norm * np.max(np.abs(T.values))
        assert abs(linops.symplectic_form(p.transversal, T)) <= 1e-10 * max(scale, 1.0)
    again = linops.project_p0(p.tangential, wave)
    assert np.max(np.abs(again.tangential.values - p.tangential.values)) <= 1e-10 * max(norm, 1.0)


def test_projection_of_point_mass(stable_wave, stable_grid):
    # T0(0) = i C and T1(0) = dC/domega = 1/2 for this wave
    p = linops.project_p0(None, stable_wave, point_mass=1.0, grid=stable_grid)
    assert (p.b0, p.b1) == pytest.approx((0.0, 4.0), abs=1e-8)
    p = linops.project_p0(None, stable_wave, point_mass=1j, grid=stable_grid)
    assert (p.b0, p.b1) == pytest.approx((2.0, 0.0), abs=1e-8)
    # a narrow normalized Gaussian approaches the point mass
    eps = 0.02
    g = Grid(20.0, 40001)
    bump = FieldState(g, (1 + 1j) * np.exp(-(g.x / eps) ** 2) / (eps * math.sqrt(math.pi)))
    q = linops.project_p0(bump, stable_wave)
    assert (q.b0, q.b1) == pytest.approx((2.0, 4.0), abs=0.1)


def test_zero_mu_error():
    from solwave.model import ZeroMuError
    wave = solitary_from_C(NonlinearCoupling.polynomial([0.0, 1.0]), math.sqrt(2))
    g = Grid(20.0, 401)
    with pytest.raises(ZeroMuError):
        linops.project_p0(FieldState(g, gaussian(g) + 0j), wave)


def test_linear_flow_on_null_space(stable_wave):
    g = Grid.for_wave(stable_wave, 4001)
    T0, T1 = tangent_frame(stable_wave, g)
    trace, snaps = linops.evolve_linear(T1, stable_wave, 1.0, 1e-3, snapshot_times=[0.5, 1.0])
    for t in (0.5, 1.0):
        exact = T1.values + t * T0.values
        assert np.max(np.abs(snaps[t].values - exact)) <= 1e-4 * np.max(np.abs(exact))
    _, snaps = linops.evolve_linear(T0, stable_wave, 1.0, 1e-3, snapshot_times=[1.0])
    assert np.max(np.abs(snaps[1.0].values - T0.values)) <= 1e-4 * np.max(np.abs(T0.values))


def test_linear_flow_step_size(stable_wave, stable_grid):
    T0, _ = tangent_frame(stable_wave, stable_grid)
    with pytest.raises(linops.StepSizeError):
        linops.evolve_linear(T0, stable_wave, 1.0, 0.02)


def _transversal_pairings(wave, t_end, times):
    g = Grid.for_wave(wave, 4001)
    chi0 = linops.project_pc(FieldState(g, gaussian(g) + 0j), wave)
    T0, T1 = tangent_frame(wave, g)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        _, snaps = linops.evolve_linear(chi0, wave, t_end, 5e-4, snapshot_times=times)
    worst = max(max(abs(linops.symplectic_form(f, T0)), abs(linops.symplectic_form(f, T1)))
                for f in snaps.values())
    return worst, np.max(np.abs(chi0.values))


def test_transversality_preserved(stable_wave):
    worst, norm = _transversal_pairings(stable_wave, 10.0, [2.0, 10.0])
    assert worst <= 1e-6 * norm


@pytest.mark.slow
def test_transversality_preserved_long(stable_wave):
    worst, norm = _transversal_pairings(stable_wave, 50.0, [10.0, 25.0, 50.0])
    assert worst <= 1e-6 * norm


@pytest.mark.slow
def test_linear_decay_late_window(stable_wave):
    # the t^{-3/2} rate only emerges after the crossover; [5, 50] is still inside it
    from solwave import diagnostics
    g = Grid.for_wave(stable_wave, 4001)
    dt = 2e-3
    chi0 = linops.project_pc(FieldState(g, gaussian(g) + 0j), stable_wave)
    ts = diagnostics.log_uniform_times(50.0, 200.0, 12, 5 * dt)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        _, snaps = linops.evolve_linear(chi0, stable_wave, 200.0, dt, snapshot_times=ts, stride=5)
    norms = [diagnostics.weighted_norm(linops.project_pc(snaps[t], stable_wave), "inf", -2.0) for t in ts]
    fit = diagnostics.decay_exponent(ts, norms, (50.0, 200.0))
    assert abs(fit.exponent + 1.5) <= 0.2


def test_origin_solver_convergence(stable_wave):
    g = Grid.for_wave(stable_wave, 4001)
    chi0 = FieldState(g, gaussian(g) + 0j)
    vals = []
    for dt in (4e-3, 2e-3, 1e-3):
        trace, _ = linops.evolve_linear(chi0, stable_wave, 1.0, dt)
        vals.append(trace.values[trace.index(1.0)])
    order = math.log2(abs(vals[0] - vals[1]) / abs(vals[1] - vals[2]))
    assert order >= 1.4


def test_boundary_trace_validation():
    with pytest.raises(DomainError):
        linops.BoundaryTrace(np.array([0.1, 0.2]), np.array([1, 2]))
    with pytest.raises(DomainError):
        linops.BoundaryTrace(np.array([0.0, 0.1]), np.array([1, np.nan]))


def test_boundary_mass_warning():
    g = Grid(5.0, 101)
    with pytest.warns(UserWarning, match="boundary"):
        linops.warn_boundary_mass([FieldState(g, np.ones(g.n) + 0j)])


def test_delta_response_small_time(stable_wave):
    r = linops.delta_response(stable_wave, [1e-4, 1e-3, 1e-2])
    assert abs(r.origin[0]) == pytest.approx(1 / (2 * math.sqrt(math.pi)), abs=5e-3)
    # |a| + |b| = 4: bound(0.01) = (2 sqrt(pi))^-1 / (1 - 0.5 sqrt(0.01 pi) 4)
    assert r.bound[-1] == pytest.approx(0.437011, abs=1e-6)
    assert r.within_bound


def test_delta_response_without_b():
    wave = solitary_from_C(NonlinearCoupling.polynomial([2.0]), 1.0)
    assert wave.b == 0
    r = linops.delta_response(wave, [1e-4, 1e-3, 1e-2])
    assert r.within_bound


def test_delta_response_precondition(stable_wave):
    with pytest.raises(DomainError):
        linops.delta_response(stable_wave, [0.5])
