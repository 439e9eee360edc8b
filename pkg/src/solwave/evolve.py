"""Nonlinear evolution and the free Schroedinger group.

``i psi_t = -psi_xx - delta(x) F(psi(0, t))`` is solved two ways:

* ``volterra``: the origin value obeys the scalar equation
  ``psi(0, t) = (W(t) psi0)(0) + i int_0^t (4 pi i (t - s))^{-1/2} F(psi(0, s)) ds``,
  solved by product integration; fields are rebuilt from the same formula
  at any ``x``.  No artificial boundary is involved.
* ``cn``: Crank-Nicolson on the grid with Dirichlet walls and the point
  interaction as a ``1/h`` weight at the origin node.  The nonlinearity uses
  a discrete gradient, so discrete charge and energy are conserved exactly.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse, special
from scipy.sparse import linalg as splinalg

from . import linops
from .linops import BoundaryTrace, StepSizeError
from .model import DomainError, FieldState, SolwaveError


class FixedPointDivergence(SolwaveError):
    pass


class WellPosednessWarning(UserWarning):
    """The coupling lies outside the regime where global solutions are known to exist."""


# ---------------------------------------------------------------------------
# free flow

def free_propagate(psi0, t, mode="kernel", pad=4):
    """``W(t) psi0``, the free Schroedinger group ``exp(i t d^2/dx^2)``.

    ``kernel`` integrates the data exactly against the chirp kernel (needs
    ``t != 0``); ``fourier`` applies ``exp(-i k^2 t)`` after zero padding by
    ``pad``.  The Fourier mode is periodic on the padded box, so dispersed
    waves that reach the box edge wrap around.  The kernel mode is accurate
    where the group speed ``|x - y| / 2t`` needed to connect data and target
    stays below ``pi / h``; beyond that the interpolant's own kinks dominate.
    """
    if mode == "kernel":
        if t == 0.0:
            raise DomainError("kernel mode needs t != 0")
        return linops.free_flow_grid(psi0, t)
    if mode != "fourier":
        raise DomainError(f"unknown free-flow mode {mode!r}")
    if pad < 4:
        raise DomainError("zero padding factor must be at least 4")
    grid = psi0.grid
    n = grid.n
    m = pad * n
    buf = np.zeros(m, complex)
    lo = (m - n) // 2
    buf[lo: lo + n] = psi0.values
    spec = np.fft.fft(buf)
    mag = np.abs(spec)
    if mag[m // 2] > 1e-10 * mag.max():
        warnings.warn("free flow: Fourier spectrum at the Nyquist frequency exceeds 1e-10 of its peak "
                      "(aliasing)", stacklevel=2)
    k = 2 * math.pi * np.fft.fftfreq(m, d=grid.h)
    out = np.fft.ifft(spec * np.exp(-1j * k * k * t))
    return psi0.like(out[lo: lo + n])


def free_exponential(kappa, x, t):
    """Free evolution of ``exp(-kappa |x|)``, closed form.

    For the heat flow of time ``s`` the solution is
    ``exp(-x^2/4s) [erfcx((2 kappa s - x)/2 sqrt(s)) + erfcx((2 kappa s + x)/2 sqrt(s))] / 2``;
    the Schroedinger flow is the continuation ``s = i t`` (``t < 0`` runs backwards).
    """
    x = np.asarray(x, dtype=float)
    if t == 0.0:
        return np.exp(-kappa * np.abs(x)).astype(complex)
    s = 1j * t
    sq = np.sqrt(s) if t > 0 else np.conj(np.sqrt(np.conj(s)))
    z1 = (2 * kappa * s - x) / (2 * sq)
    z2 = (2 * kappa * s + x) / (2 * sq)
    return 0.5 * np.exp(-x * x / (4 * s)) * (special.erfcx(z1) + special.erfcx(z2))


# ---------------------------------------------------------------------------
# conserved quantities

def charge(psi):
    """``Q = int |psi|^2`` by the grid sum."""
    return float(psi.grid.h * np.sum(np.abs(psi.values) ** 2))


def energy(psi, coupling):
    """``H = (1/2) int |psi'|^2 - A(|psi(0)|^2) / 2`` with ``A' = a``, ``A(0) = 0``.

    The gradient term uses forward differences, which is the form the
    Crank-Nicolson scheme conserves exactly.
    """
    v = psi.values
    grad = np.sum(np.abs(np.diff(v)) ** 2) / psi.grid.h
    return float(0.5 * grad - 0.5 * coupling.antiderivative(abs(psi.at_origin) ** 2))


@dataclass(frozen=True)
class Trajectory:
    boundary: BoundaryTrace
    snapshots: tuple
    scheme: str
    charge: np.ndarray = field(default=None)
    energy: np.ndarray = field(default=None)
    coupling: object = field(default=None, repr=False)
    psi0: FieldState = field(default=None, repr=False)

    @property
    def snapshot_times(self):
        return np.array([t for t, _ in self.snapshots])

    def snapshot(self, t):
        for s, f in self.snapshots:
            if abs(s - t) <= 1e-9 * max(1.0, abs(t)):
                return f
        raise DomainError(f"no snapshot at t = {t}")


def _conserved(snaps, coupling):
    q = np.array([charge(f) for _, f in snaps])
    e = np.array([energy(f, coupling) for _, f in snaps])
    return q, e


# ---------------------------------------------------------------------------
# nonlinear solvers

def _check_tails(psi0, tol=1e-10):
    v = np.abs(psi0.values)
    peak = v.max()
    if peak > 0 and max(v[0], v[-1]) > tol * peak:
        warnings.warn(f"initial data not negligible at the grid boundary "
                      f"({max(v[0], v[-1]) / peak:.1e} of the peak)", stacklevel=3)


def _snapshot_steps(times, dt, t_end):
    times = sorted(float(t) for t in times)
    for t in times:
        k = round(t / dt)
        if t < 0 or t > t_end + 1e-12 or abs(k * dt - t) > 1e-9 * max(1.0, t):
            raise DomainError(f"snapshot time {t} is not a step time in [0, {t_end}]")
    return times


def _nonlinear_local(coupling, tol=1e-14, max_iter=50):
    def solve_local(rhs, K0, prev, prev2):
        u = 2 * prev - prev2
        for _ in range(max_iter):
            new = rhs + K0 * coupling.force(u)
            if abs(new - u) <= tol * max(1.0, abs(new)):
                return new
            u = new
        raise FixedPointDivergence("origin fixed point did not converge")

    return coupling.force, solve_local


def evolve_nonlinear(psi0, coupling, t_end, dt, scheme="volterra", snapshot_times=(), stride=1):
    """Evolve ``psi0`` to ``t_end`` with step ``dt``; snapshots at the requested step times."""
    if dt <= 0 or t_end <= 0:
        raise StepSizeError("t_end and dt must be positive")
    n = int(round(t_end / dt))
    if abs(n * dt - t_end) > 1e-9 * t_end:
        raise StepSizeError("t_end must be a whole number of steps")
    _check_tails(psi0)
    if coupling.potential_bounded_below() is False:
        warnings.warn("well-posedness not guaranteed: the coupling potential -A(|z|^2)/2 is not "
                      "bounded below by A0 - B|z|^2", WellPosednessWarning, stacklevel=2)
    times = _snapshot_steps(snapshot_times, dt, t_end)
    if scheme == "volterra":
        return _evolve_volterra(psi0, coupling, n, dt, times, stride)
    if scheme in ("cn", "crank_nicolson"):
        return _evolve_cn(psi0, coupling, n, dt, times)
    raise DomainError(f"unknown scheme {scheme!r}")


def _evolve_volterra(psi0, coupling, n, dt, snapshot_times, stride):
    if dt > 1e-2:
        raise StepSizeError(f"time step {dt} exceeds 1e-2")
    t = dt * np.arange(n + 1)
    free = linops.free_flow_points(psi0, [0.0], t)[:, 0]
    local, solve_local = _nonlinear_local(coupling)
    u, _ = linops.solve_origin(free, dt, 0.0, local, solve_local)
    trace = BoundaryTrace(t, u)
    snaps = reconstruct_many(trace, psi0, snapshot_times, coupling, stride)
    q, e = _conserved(snaps, coupling)
    return Trajectory(trace, tuple(snaps), "volterra", q, e, coupling, psi0)


def _laplacian(n, h):
    main = np.full(n, -2.0)
    off = np.ones(n - 1)
    return sparse.diags([off, main, off], [-1, 0, 1], format="csc") / h ** 2


def _evolve_cn(psi0, coupling, n, dt, snapshot_times, tol=1e-12, max_iter=20):
    grid = psi0.grid
    h = grid.h
    i0 = grid.origin
    lap = _laplacian(grid.n, h)
    eye = sparse.identity(grid.n, format="csc")
    solve = splinalg.factorized((eye - 0.5j * dt * lap).tocsc())
    explicit = (eye + 0.5j * dt * lap).tocsr()
    e0 = np.zeros(grid.n, complex)
    e0[i0] = 1.0
    g = solve(e0)
    g0 = g[i0]
    c = 1j * dt / h

    nodes, weights = np.polynomial.legendre.leggauss(8)
    theta = 0.5 * (nodes + 1)

    def a_mid(s0, s1):
        # mean of a over [s0, s1], i.e. the divided difference of A without cancellation
        return float(0.5 * np.dot(weights, coupling.a(s0 + theta * (s1 - s0))))

    psi = psi0.values.copy()
    boundary = np.empty(n + 1, complex)
    boundary[0] = psi[i0]
    snaps = []
    want = {round(t / dt): t for t in snapshot_times}
    if 0 in want:
        snaps.append((want[0], psi0))
    for m in range(1, n + 1):
        base = solve(explicit @ psi)
        p_old = psi[i0]
        s_old = abs(p_old) ** 2
        p = base[i0] + c * g0 * float(coupling.a(s_old)) * p_old
        for it in range(max_iter):
            q = a_mid(s_old, abs(p) ** 2) * 0.5 * (p_old + p)
            p_new = base[i0] + c * g0 * q
            if abs(p_new - p) <= tol * max(1.0, abs(p_new)):
                p = p_new
                break
            p = p_new
        else:
            raise FixedPointDivergence("Crank-Nicolson fixed point did not converge")
        q = a_mid(s_old, abs(p) ** 2) * 0.5 * (p_old + p)
        psi = base + c * q * g
        boundary[m] = psi[i0]
        if m in want:
            snaps.append((want[m], psi0.like(psi.copy())))
    trace = BoundaryTrace(dt * np.arange(n + 1), boundary)
    qs, es = _conserved(snaps, coupling)
    return Trajectory(trace, tuple(snaps), "crank_nicolson", qs, es, coupling, psi0)


# ---------------------------------------------------------------------------
# field reconstruction

def reconstruct_many(boundary, psi0, times, coupling, stride=1, grid=None):
    """Fields at several times from the origin trace, as ``[(t, FieldState)]``."""
    grid = grid or psi0.grid
    if grid != psi0.grid:
        raise DomainError("reconstruction grid must be the grid of the initial data")
    times = [float(t) for t in times]
    if not times:
        return []
    last = boundary.times[-1]
    for t in times:
        if t < 0 or t > last + 1e-12:
            raise DomainError(f"time {t} outside the boundary trace [0, {last}]")
    g = coupling.force(boundary.values)
    r = grid.x[grid.origin:]
    positive = [t for t in times if t > 0]
    duh = linops.duhamel_fields(g, boundary.dt, positive, r, 0.0, stride) if positive else None
    out = []
    col = 0
    for t in times:
        if t == 0.0:
            out.append((t, psi0))
            continue
        vals = linops.free_flow_grid(psi0, t).values + linops.mirror_even(grid, duh[:, col])
        col += 1
        out.append((t, FieldState(grid, vals)))
    linops.warn_boundary_mass(f for _, f in out)
    return out


def reconstruct_field(boundary, psi0, t, grid=None, coupling=None, stride=1):
    """``psi(x, t) = (W(t) psi0)(x) + i int_0^t W(x, t - s) F(psi(0, s)) ds`` on the grid."""
    if coupling is None:
        raise DomainError("reconstruction needs the coupling")
    return reconstruct_many(boundary, psi0, [t], coupling, stride, grid)[0][1]
