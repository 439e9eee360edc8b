"""Modulation parameters along a trajectory.

A solution near the solitary manifold is written as
``psi = exp(j theta) (Phi_omega + chi)`` with ``chi`` symplectically
orthogonal to the tangent frame of ``omega``.  The pair ``(omega, theta)`` is
found at each time by Newton's method on the two orthogonality conditions;
the modulation ODE right-hand sides are evaluated separately as a check.

Inner products ``<u, v>`` are real: ``int Re(conj(u) v)``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate as sintegrate

from . import linops
from .diagnostics import weighted_norm
from .evolve import free_exponential, free_propagate
from .model import (DomainError, FieldState, SolwaveError, mu_omega, solitary_from_C,
                    solitary_from_omega, tangent_frame)

NEWTON_TOL = 1e-12
FD_STEP = 1e-5


class ModulationDivergence(SolwaveError):
    """Newton's method for the orthogonality conditions failed."""


class SmallDenominator(SolwaveError):
    """The modulation equations degenerate: the state left the tubular neighbourhood."""


# ---------------------------------------------------------------------------
# waves parametrized by omega

def wave_at(coupling, omega, C_guess, theta=0.0):
    """The wave with frequency ``omega`` on the branch through amplitude ``C_guess``."""
    if not omega > 0:
        raise DomainError(f"omega must be positive, got {omega}")
    target = 2.0 * math.sqrt(omega)
    C = float(C_guess)
    for _ in range(60):
        f = float(coupling.a(C * C)) - target
        d = 2.0 * C * float(coupling.a_prime(C * C))
        if d == 0.0:
            raise DomainError("a'(C^2) = 0: omega does not parametrize the manifold here")
        step = f / d
        C -= step
        if C <= 0:
            raise DomainError("amplitude left the positive axis")
        if abs(step) <= 1e-15 * C:
            break
    return solitary_from_C(coupling, C, theta)


def inner(u, v):
    """Real ``L^2`` pairing by the kink-corrected trapezoid rule."""
    return float(linops.integrate(np.real(np.conj(u.values) * v.values), u.grid))


# ---------------------------------------------------------------------------
# extraction

def _residual(psi, wave, theta):
    grid = psi.grid
    chi = psi.like(psi.values * np.exp(-1j * theta) - wave.profile(grid.x))
    T0, T1 = tangent_frame(wave, grid)
    return np.array([linops.symplectic_form(chi, T0), linops.symplectic_form(chi, T1)]), chi


def extract_parameters(psi, coupling, guess, tol=NEWTON_TOL, max_iter=50, max_distance=0.3,
                       beta=2.0):
    """``(omega, theta, chi)`` with ``chi = exp(-j theta) psi - Phi_omega`` orthogonal to the frame.

    ``guess`` is ``(omega, theta)`` or a :class:`SolitaryWave`; the wave's
    amplitude selects the branch of the manifold.  The Jacobian in ``theta`` is
    exact, the one in ``omega`` a centred difference.  A converged ``chi``
    larger than ``max_distance * C`` in ``L^inf_{-beta}`` is rejected.
    """
    if hasattr(guess, "omega"):
        omega, theta, C = guess.omega, guess.theta, guess.C
    else:
        omega, theta = (float(v) for v in guess[:2])
        if len(guess) > 2:
            C = float(guess[2])
        else:
            found = solitary_from_omega(coupling, omega)
            if len(found) != 1:
                raise DomainError(f"{len(found)} waves have omega = {omega}; pass (omega, theta, C)")
            C = found[0].C
    wave = wave_at(coupling, omega, C)
    mu_omega(wave)  # raises for a degenerate tangent plane
    scale = None
    for it in range(max_iter):
        F, chi = _residual(psi, wave, theta)
        T0, T1 = tangent_frame(wave, psi.grid)
        if scale is None:
            scale = max(1.0, abs(linops.symplectic_form(T0, T1)))
        if np.max(np.abs(F)) <= tol * scale:
            dist = weighted_norm(chi, "inf", -beta)
            if dist > max_distance * wave.C:
                raise ModulationDivergence(
                    f"field is {dist:.3g} from the manifold in L^inf_-{beta}, beyond "
                    f"{max_distance} C = {max_distance * wave.C:.3g}; no reliable modulation")
            return wave.omega, theta, chi, wave
        # d/dtheta of exp(-j theta) psi is -j exp(-j theta) psi
        dpsi = psi.like(-1j * psi.values * np.exp(-1j * theta))
        J = np.empty((2, 2))
        J[:, 1] = [linops.symplectic_form(dpsi, T0), linops.symplectic_form(dpsi, T1)]
        eps = 1e-6 * wave.omega
        Fp, _ = _residual(psi, wave_at(coupling, wave.omega + eps, wave.C), theta)
        Fm, _ = _residual(psi, wave_at(coupling, wave.omega - eps, wave.C), theta)
        J[:, 0] = (Fp - Fm) / (2 * eps)
        try:
            step = np.linalg.solve(J, F)
        except np.linalg.LinAlgError as exc:
            raise ModulationDivergence("singular orthogonality Jacobian") from exc
        if not np.all(np.isfinite(step)) or wave.omega - step[0] <= 0:
            break
        theta = theta - step[1]
        try:
            wave = wave_at(coupling, wave.omega - step[0], wave.C)
        except DomainError as exc:
            raise ModulationDivergence(str(exc)) from exc
    raise ModulationDivergence(f"orthogonality conditions not met after {max_iter} Newton steps; "
                               "the field is probably too far from the solitary manifold")


# ---------------------------------------------------------------------------
# modulation equations

def _remainder_force(wave, chi0):
    """``F(Phi + chi) - F(Phi) - F'(Phi) chi`` at the origin."""
    C = wave.C
    full = complex(wave.coupling.force(C + chi0))
    return full - wave.a * C - (wave.a * chi0 + wave.b * chi0.real)


def modulation_rhs(chi, wave, coupling=None, step=FD_STEP):
    """``(dot_omega, dot_gamma)`` from the modulation equations.

    ``Q = i delta(x) N`` with ``N`` the quadratic remainder of the force at the
    origin; ``P^0 Q`` is the projection of that point mass.  ``d P^0 / d omega``
    is a centred difference with step ``step``.
    """
    coupling = coupling or wave.coupling
    grid = chi.grid
    x = grid.x
    N = _remainder_force(wave, complex(chi.at_origin))
    if N == 0:
        return 0.0, 0.0
    P0Q = linops.project_p0(None, wave, point_mass=1j * N, grid=grid).tangential
    up = wave_at(coupling, wave.omega + step, wave.C)
    dn = wave_at(coupling, wave.omega - step, wave.C)
    dP0chi = (linops.project_p0(chi, up).tangential - linops.project_p0(chi, dn).tangential) * (1 / (2 * step))
    _, T1 = tangent_frame(wave, grid)
    Psi = chi.like(wave.profile(x) + chi.values)
    v = T1 - dP0chi
    den = inner(v, Psi)
    ref = abs(inner(T1, chi.like(wave.profile(x))))
    if abs(den) <= 0.1 * ref:
        raise SmallDenominator(f"modulation denominator {den:.3e} below 0.1 of {ref:.3e}")
    Pv = linops.project_p0(v, wave).tangential
    dot_omega = inner(P0Q, Psi) / den
    dot_gamma = inner(Pv * 1j, P0Q) / den
    return float(dot_omega), float(dot_gamma)


# ---------------------------------------------------------------------------
# traces along a trajectory

def rate(times, values):
    """Time derivative of a uniformly sampled series.

    Fourth-order centred differences inside, second-order one-sided ones at
    the two ends and their neighbours.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if t.size < 3:
        raise DomainError("at least three samples are needed for a rate")
    dt = np.diff(t)
    if np.max(np.abs(dt - dt[0])) > 1e-9 * max(1.0, abs(dt[0])):
        raise DomainError("rates need uniformly spaced times")
    h = dt[0]
    out = np.gradient(y, h, edge_order=2)
    if y.size >= 5:
        out[2:-2] = (y[:-4] - 8 * y[1:-3] + 8 * y[3:-1] - y[4:]) / (12 * h)
    return out


@dataclass(frozen=True)
class ModulationTrace:
    times: np.ndarray
    omega: np.ndarray
    theta: np.ndarray
    gamma: np.ndarray
    chi: tuple
    dot_omega: np.ndarray
    dot_gamma: np.ndarray
    waves: tuple = field(default=(), repr=False)
    orthogonality: np.ndarray = field(default=None, repr=False)


def _unwrap_near(theta, previous):
    return previous + (theta - previous + math.pi) % (2 * math.pi) - math.pi


def build_trace(snapshots, coupling, guess):
    """Extract ``(omega, theta, chi)`` at each snapshot, seeding Newton with the previous time."""
    if not snapshots:
        raise DomainError("no snapshots to extract from")
    times, omegas, thetas, chis, waves, orth = [], [], [], [], [], []
    seed = guess
    prev_t = None
    for t, psi in snapshots:
        if prev_t is not None and hasattr(seed, "omega"):
            # advance the phase guess by the rotation over the interval
            seed = seed.with_theta(seed.theta + seed.omega * (t - prev_t))
        om, th, chi, wave = extract_parameters(psi, coupling, seed)
        if thetas:
            th = _unwrap_near(th, thetas[-1] + om * (t - prev_t))
        wave = wave.with_theta(th)
        T0, T1 = tangent_frame(wave, psi.grid)
        norm_chi = math.sqrt(max(inner(chi, chi), 0.0))
        res = max(abs(linops.symplectic_form(chi, T0)) / math.sqrt(inner(T0, T0)),
                  abs(linops.symplectic_form(chi, T1)) / math.sqrt(inner(T1, T1)))
        orth.append(res / max(norm_chi, 1e-300) if norm_chi else res)
        times.append(float(t))
        omegas.append(om)
        thetas.append(th)
        chis.append(chi)
        waves.append(wave)
        seed = wave
        prev_t = t
    times = np.array(times)
    omegas = np.array(omegas)
    thetas = np.array(thetas)
    integral = sintegrate.cumulative_trapezoid(omegas, times, initial=0.0)
    gamma = thetas - integral
    if times.size >= 3:
        dot_omega = rate(times, omegas)
        dot_gamma = rate(times, gamma)
    else:
        dot_omega = np.zeros_like(times)
        dot_gamma = np.zeros_like(times)
    return ModulationTrace(times, omegas, thetas, gamma, tuple(chis), dot_omega, dot_gamma,
                           tuple(waves), np.array(orth))


@dataclass(frozen=True)
class Majorant:
    M: float
    times: np.ndarray
    chi_term: np.ndarray
    rate_term: np.ndarray

    @property
    def running(self):
        """``M(T)`` at every available ``T``."""
        return np.maximum.accumulate(self.chi_term + self.rate_term)


def majorant(trace, beta=2.0):
    """``sup_t (1+t)^{3/2} |chi|_{L^inf_{-beta}} + (1+t)^3 (|dot gamma| + |dot omega|)``."""
    t = np.asarray(trace.times, dtype=float)
    if t.size == 0:
        raise DomainError("empty modulation trace")
    norms = np.array([weighted_norm(c, "inf", -beta) for c in trace.chi])
    chi_term = (1 + t) ** 1.5 * norms
    rate_term = (1 + t) ** 3 * (np.abs(trace.dot_gamma) + np.abs(trace.dot_omega))
    return Majorant(float(np.max(chi_term + rate_term)), t, chi_term, rate_term)


# ---------------------------------------------------------------------------
# scattering asymptotics

@dataclass(frozen=True)
class AsymptoticSplit:
    phi_plus: FieldState
    times: np.ndarray
    sup_norm: np.ndarray
    l2_norm: np.ndarray
    phi2: FieldState = None
    truncation_scale: float = math.nan

    @property
    def norm(self):
        """``C_b \\cap L^2`` norm as the larger of the two."""
        return np.maximum(self.sup_norm, self.l2_norm)


def accompanying_difference(psi, wave):
    """``z = psi - psi_omega exp(i theta)``."""
    return psi - wave.field(psi.grid)


def scattering_state(z, t):
    """``W(-t) z``, the free-flow pull-back of a field sampled at time ``t``.

    Only the part of ``z`` inside the grid is pulled back; radiation that has
    already left the window is lost.  ``pull_back`` avoids this.
    """
    return free_propagate(z, -t) if t else z


def _point_source_pullback(h, dt, T, grid, stride, starting=False):
    """``i int_0^T W(-tau) delta h(tau) dtau`` on ``grid`` from samples of ``h`` at step times."""
    n = int(round(T / dt))
    r = grid.x[grid.origin:]
    # i int_0^T W(x, -tau) h(tau) dtau = -conj(i int_0^T W(x, T - s) conj(h(T - s)) ds)
    g = np.conj(h[: n + 1][::-1])
    stride = max(1, min(stride, n))
    while n % stride:
        stride -= 1
    duh = linops.duhamel_fields(g, dt, [T], r, 0.0, stride, starting=starting)[:, 0]
    return FieldState(grid, linops.mirror_even(grid, -np.conj(duh)))


def pull_back(trajectory, trace, T, stride=1):
    """``W(-T) z(T)`` for the whole line, not just the grid window.

    Uses ``W(-T) psi(T) = psi0 + i int_0^T W(-tau) delta F(psi(0, tau)) dtau``
    and the closed-form backward flow of the accompanying wave
    ``C exp(i theta) exp(-kappa |x|)`` at ``T``, so radiation that has left
    the window by time ``T`` is still accounted for.
    """
    bt = trajectory.boundary
    if not 0 < T <= bt.times[-1] + 1e-12:
        raise DomainError(f"T = {T} outside the boundary trace")
    k = int(np.argmin(np.abs(trace.times - T)))
    if abs(trace.times[k] - T) > 1e-9 * max(1.0, T):
        raise DomainError(f"no modulation data at T = {T}")
    wave = trace.waves[k]
    psi0 = trajectory.psi0
    x = psi0.grid.x
    force = trajectory.coupling.force(bt.values)
    free_part = psi0 + _point_source_pullback(force, bt.dt, T, psi0.grid, stride)
    accompanying = wave.C * np.exp(1j * wave.theta) * free_exponential(wave.kappa, x, -T)
    return free_part - FieldState(psi0.grid, accompanying)


def asymptotic_split(trajectory, trace, T_ref, times=None, phi2=True, stride=10, pull_stride=1):
    """Split the radiation into a free wave plus a remainder.

    ``Phi_+`` is estimated as ``W(-T_ref) z(T_ref)`` by ``pull_back`` (with
    Duhamel stride ``pull_stride``), so radiation that has left the grid is
    kept.  The returned norms are ``|z(t) - W(t) Phi_+|`` in sup and ``L^2``
    on the grid over the snapshot times (``times`` restricts them).  With
    ``phi2`` the point-source part ``i int_0^T_ref W(-tau) delta h(tau) dtau``
    of ``Phi_+`` is also computed,
    ``h = F(psi(0, t)) - F(s(0, t))``, the accompanying soliton ``s`` being
    interpolated between the trace times.  Cutting the pull-back at
    ``T_ref`` drops a tail of order ``T_ref^{-2}``; that scale (without its
    unknown constant) is reported as ``truncation_scale``.
    """
    if T_ref < 10:
        warnings.warn(f"T_ref = {T_ref} is short; the scattering state is poorly resolved", stacklevel=2)
    wave_of = dict(zip(np.round(trace.times, 9), trace.waves))
    snaps = {round(t, 9): f for t, f in trajectory.snapshots}
    key = round(float(T_ref), 9)
    if key not in snaps or key not in wave_of:
        raise DomainError(f"no snapshot and modulation data at T_ref = {T_ref}")
    phi_plus = pull_back(trajectory, trace, float(T_ref), pull_stride)
    sel = [t for t in trace.times if times is None or any(abs(t - s) < 1e-9 for s in times)]
    sup, l2 = [], []
    for t in sel:
        k = round(float(t), 9)
        z = accompanying_difference(snaps[k], wave_of[k])
        r = z - (free_propagate(phi_plus, t) if t else phi_plus)
        sup.append(float(np.max(np.abs(r.values))))
        l2.append(math.sqrt(r.grid.h * float(np.sum(np.abs(r.values) ** 2))))
    p2 = _phi2(trajectory, trace, T_ref, stride) if phi2 else None
    return AsymptoticSplit(phi_plus, np.array(sel), np.array(sup), np.array(l2), p2,
                           float(T_ref) ** -2)


def _phi2(trajectory, trace, T_ref, stride):
    bt = trajectory.boundary
    coupling = trajectory.coupling
    n = int(round(T_ref / bt.dt))
    t = bt.times[: n + 1]
    # accompanying soliton at the origin: C(t) exp(i theta(t)), theta unwrapped
    C = np.interp(t, trace.times, [w.C for w in trace.waves])
    th = np.interp(t, trace.times, trace.theta)
    s0 = C * np.exp(1j * th)
    h = coupling.force(bt.values[: n + 1]) - coupling.force(s0)
    return _point_source_pullback(h, bt.dt, T_ref, trajectory.psi0.grid, stride)
