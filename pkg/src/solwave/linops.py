"""Linearized dynamics around a solitary wave.

The linearization acts on real pairs ``chi = (chi_1, chi_2)``, stored here as
complex fields ``chi_1 + i chi_2``.  Its generator ``C = j^{-1} B`` splits into
the free part ``-i(-d^2/dx^2 + omega)`` and a point interaction at the origin,
so the flow is fully determined by the scalar trace ``chi(0, t)``, which obeys
a Volterra equation with the Abel-type kernel ``(4 pi i t)^{-1/2}``.

Point-source integrals ``int W(x, t - s) phi(s) ds`` are computed by product
integration: ``phi`` is interpolated linearly in time and integrated exactly
against the free kernel, whose time antiderivatives are closed-form
(analytic continuation of the heat-kernel ones).  The free flow of grid data
uses the same idea in space, with exact chirp integrals of the piecewise
linear interpolant.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import signal, special

from .model import DomainError, FieldState, SolwaveError, mu_omega, tangent_frame

SQRT_PI = math.sqrt(math.pi)
_ASYMPTOTIC_Z = 7.0


class StepSizeError(SolwaveError):
    pass


@dataclass(frozen=True)
class BoundaryTrace:
    """Samples of ``chi(0, t)`` on a uniform time grid starting at zero."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=complex)
        if t.ndim != 1 or t.shape != v.shape or t.size < 1:
            raise DomainError("boundary trace needs matching 1d times and values")
        if t[0] != 0.0:
            raise DomainError("boundary trace must start at t = 0")
        if not np.all(np.isfinite(v)):
            raise DomainError("boundary trace values must be finite")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @property
    def dt(self):
        return self.times[1] - self.times[0] if self.times.size > 1 else 0.0

    def index(self, t):
        k = int(round(t / self.dt)) if self.dt else 0
        if k < 0 or k >= self.times.size or abs(self.times[k] - t) > 1e-9 * max(1.0, abs(t)):
            raise DomainError(f"time {t} is not a step of this trace")
        return k


# ---------------------------------------------------------------------------
# free kernel primitives

def _heat_moments(r, s):
    """``int_0^s G`` and ``int_0^s sigma G`` for the heat kernel ``G(r, sigma)``.

    ``s`` may be complex with ``Re s >= 0``; the closed forms are written with
    the scaled complementary error function so that the oscillatory factor
    ``exp(-r^2 / 4s)`` is explicit.  For large ``|r / 2 sqrt(s)|`` the leading
    terms cancel and the asymptotic series is summed instead.
    """
    r, s = np.broadcast_arrays(np.asarray(r, dtype=float), np.asarray(s, dtype=complex))
    sq = np.sqrt(s)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(r == 0, 0.0, r / (2 * sq))
        ez = np.where(r == 0, 1.0, np.exp(-(r * r) / (4 * s)))
    I0 = np.zeros(r.shape, complex)
    I1 = np.zeros(r.shape, complex)
    zero = s == 0
    big = (np.abs(z) >= _ASYMPTOTIC_Z) & ~zero
    sm = ~big & ~zero
    ex = special.erfcx(z[sm])
    rs, ss, qs = r[sm], s[sm], sq[sm]
    I0[sm] = ez[sm] * (qs / SQRT_PI - rs / 2 * ex)
    I1[sm] = ez[sm] * (qs * (ss / 3 - rs * rs / 6) / SQRT_PI + rs ** 3 / 12 * ex)
    if np.any(big):
        zb = z[big]
        q = 1 / (2 * zb * zb)
        term = np.ones_like(zb)
        S0 = np.zeros_like(zb)
        S2 = np.zeros_like(zb)
        for n in range(1, 40):
            term = -(2 * n - 1) * q * term
            S0 -= term
            if n >= 2:
                S2 += term * zb * zb
        pref = ez[big] * sq[big] / SQRT_PI
        I0[big] = pref * S0
        I1[big] = pref * (2.0 / 3.0) * s[big] * S2
    return I0, I1


def kernel_time_antiderivatives(r, T):
    """``int_0^T W(r, tau) dtau`` and ``int_0^T tau W(r, tau) dtau`` for ``T >= 0``.

    ``W(r, tau) = exp(i r^2 / 4 tau) / sqrt(4 pi i tau)`` is the free
    Schroedinger kernel; backward kernels are the complex conjugates.
    """
    I0, I1 = _heat_moments(r, 1j * np.asarray(T, dtype=float))
    return -1j * I0, -I1


def _i2erfc_scaled(z):
    """``exp(z^2) i^2erfc(z)`` for complex ``z`` with ``Re z >= 0``."""
    z = np.asarray(z, dtype=complex)
    out = np.empty_like(z)
    big = np.abs(z) >= _ASYMPTOTIC_Z
    zs = z[~big]
    out[~big] = ((1 + 2 * zs * zs) * special.erfcx(zs) - 2 * zs / SQRT_PI) / 4
    if np.any(big):
        zb = z[big]
        term = np.ones_like(zb)
        total = np.ones_like(zb)
        for m in range(1, 30):
            term = -term * (2 * m + 2) * (2 * m + 1) / (m * (2 * zb) ** 2)
            total += term
        out[big] = 2 / (SQRT_PI * (2 * zb) ** 3) * total
    return out


def sqrt_source_moment(r, T):
    """``int_0^T W(r, tau) sqrt(T - tau) dtau``, exact.

    Laplace inversion of the heat-kernel convolution with ``sqrt(t)`` gives
    ``sqrt(pi) t i^2erfc(r / 2 sqrt(t))``; the Schroedinger version follows by
    continuation ``t -> i T``.
    """
    r, T = np.broadcast_arrays(np.asarray(r, dtype=float), np.asarray(T, dtype=float))
    out = np.zeros(r.shape, complex)
    pos = T > 0
    s = 1j * T[pos]
    z = r[pos] / (2 * np.sqrt(s))
    out[pos] = (1j) ** -0.5 * SQRT_PI * T[pos] * np.exp(-z * z) * _i2erfc_scaled(z)
    return out


def point_source_weights(r, dt, n):
    """Product-integration weights for ``int_0^{n dt} W(r, tau) phi(tau) dtau``.

    Returns ``(w, left)`` with shape ``(len(r), n + 1)``.  For a function known
    at ``tau_k = k dt``, the integral over ``[0, m dt]`` is
    ``sum_{k<=m} w[:, k] phi_k - left[:, m] phi_m``: ``w`` holds the full hat
    weights and ``left[:, m]`` the part of hat ``m`` lying beyond ``m dt``.
    """
    r = np.atleast_1d(np.asarray(r, dtype=float))
    tau = dt * np.arange(n + 2)
    A0, A1 = kernel_time_antiderivatives(r[:, None], tau[None, :])
    dA0 = np.diff(A0, axis=1)
    dA1 = np.diff(A1, axis=1)
    left = (tau[None, 1:] * dA0 - dA1) / dt
    right = (dA1 - tau[None, :-1] * dA0) / dt
    w = left[:, : n + 1].copy()
    w[:, 1:] += right[:, :n]
    return w, left[:, : n + 1]


def chirp_weights(u, h, t):
    """Weights ``w_m`` with ``int W(-u, t) f(u) du = sum_m w_m f(u_m)`` for linear ``f``.

    ``u`` is a uniform node set of spacing ``h`` (offsets ``y - x``).  The
    piecewise linear interpolant of the samples (extended by zero one cell
    beyond the ends) is integrated exactly against the chirp ``exp(i u^2/4t)``.
    ``t`` may be negative.
    """
    c = 1.0 / (4.0 * t)
    ce = np.concatenate([[u[0] - h], u, [u[-1] + h]])
    ac = abs(c)
    scale = math.sqrt(2.0 * ac / math.pi)
    S, Cf = special.fresnel(ce * scale)
    M0 = math.sqrt(math.pi / (2.0 * ac)) * (Cf + 1j * S)
    if c < 0:
        M0 = M0.conj()
    half = c * ce * ce / 2
    M1 = np.sin(half) * np.exp(1j * half) / c
    dM0 = np.diff(M0)
    dM1 = np.diff(M1)
    left = (ce[1:] * dM0 - dM1) / h
    right = (dM1 - ce[:-1] * dM0) / h
    pref = 1.0 / np.sqrt(4j * math.pi * t)
    return pref * (left[1:] + right[:-1])


def _corrected(psi0):
    """Samples shifted by ``-h^2 f''/12``.

    The linear interpolant of the shifted samples has the cell averages of
    ``f`` up to ``O(h^4)``, which lifts the chirp quadrature to fourth order
    wherever the kernel is resolved.  A kink at the origin is handled by
    averaging the one-sided second derivatives there.
    """
    grid = psi0.grid
    return psi0.values - grid.h ** 2 / 12 * _second_derivative(psi0.values, grid.h, grid.origin)


def free_flow_points(psi0, x_points, times):
    """``(W(t) psi0)(x)`` for every time and target point, by exact chirp quadrature.

    Returns an array of shape ``(len(times), len(x_points))``.  Nodes where the
    data vanish to round-off are skipped.
    """
    grid = psi0.grid
    raw = psi0.values
    vals = _corrected(psi0)
    keep = np.abs(vals) > 1e-17 * max(np.max(np.abs(vals)), 1e-300)
    if not np.any(keep):
        return np.zeros((len(times), len(x_points)), complex)
    idx = np.nonzero(keep)[0]
    lo, hi = idx[0], idx[-1] + 1
    y = grid.x[lo:hi]
    f = vals[lo:hi]
    h = grid.h
    times = np.atleast_1d(np.asarray(times, dtype=float))
    x_points = np.atleast_1d(np.asarray(x_points, dtype=float))
    out = np.empty((times.size, x_points.size), complex)
    for i, t in enumerate(times):
        for j, x0 in enumerate(x_points):
            if t == 0.0:
                out[i, j] = np.interp(x0, grid.x, raw.real) + 1j * np.interp(x0, grid.x, raw.imag)
            else:
                out[i, j] = np.dot(chirp_weights(y - x0, h, t), f)
    return out


def free_flow_grid(psi0, t):
    """``W(t) psi0`` on the grid of ``psi0`` by exact chirp quadrature.

    The weights depend only on node offsets, so the sum is a discrete
    convolution evaluated with FFTs.
    """
    if t == 0.0:
        return psi0
    grid = psi0.grid
    n = grid.n
    offsets = grid.h * np.arange(-(n - 1), n)
    w = chirp_weights(offsets, grid.h, t)
    size = 1 << int(math.ceil(math.log2(3 * n)))
    conv = np.fft.ifft(np.fft.fft(w, size) * np.fft.fft(_corrected(psi0)[::-1], size))
    # sum_j w[j - i + n - 1] f_j  ==  (w * reversed f)[2n - 2 - i]
    vals = conv[n - 1: 2 * n - 1][::-1]
    return psi0.like(vals)


# ---------------------------------------------------------------------------
# symplectic structure

def _check_same_grid(*fields):
    g = fields[0].grid
    for f in fields[1:]:
        if f.grid != g:
            raise DomainError("grid mismatch")
    return g


def _tail(f, h, side):
    """Integral beyond the last node of a decaying exponential tail."""
    a, b = (f[-1], f[-2]) if side == "right" else (f[0], f[1])
    if a == 0.0 or b == 0.0 or abs(a) >= abs(b):
        return 0.0
    rate = math.log(abs(b / a)) / h
    return a / rate


def integrate(f, grid, exp_tails=False):
    """Trapezoid rule on the grid, optionally with exponential tail corrections.

    Integrands here may have a kink at the origin (the frame vectors do), so
    the Euler-Maclaurin terms of the jumps in ``f'`` and ``f'''`` there are
    added; this keeps the rule sixth order for piecewise smooth integrands.
    """
    f = np.asarray(f)
    total = grid.h * (f.sum() - 0.5 * (f[0] + f[-1]))
    total = total + _kink_correction(f, grid.h, grid.origin)
    if exp_tails:
        total = total + _tail(f.real, grid.h, "left") + _tail(f.real, grid.h, "right")
        if np.iscomplexobj(f):
            total = total + 1j * (_tail(f.imag, grid.h, "left") + _tail(f.imag, grid.h, "right"))
    return total


def _kink_correction(f, h, i0):
    """Euler-Maclaurin terms of a derivative kink at node ``i0``, accurate to ``O(h^6)``."""
    def one_sided(v):
        d1 = (-25 * v[0] + 48 * v[1] - 36 * v[2] + 16 * v[3] - 3 * v[4]) / (12 * h)
        d3 = (-5 * v[0] + 18 * v[1] - 24 * v[2] + 14 * v[3] - 3 * v[4]) / (2 * h ** 3)
        return d1, d3

    p1, p3 = one_sided(f[i0: i0 + 5])
    m1, m3 = one_sided(f[i0: i0 - 5 if i0 >= 5 else None: -1])
    # the left stencil runs towards -x, so its derivatives of odd order flip sign
    return h ** 2 / 12 * (p1 + m1) - h ** 4 / 720 * (p3 + m3)


def symplectic_form(psi, eta, exp_tails=False):
    """``Omega(psi, eta) = int (psi_1 eta_2 - psi_2 eta_1) dx``."""
    grid = _check_same_grid(psi, eta)
    return float(integrate(np.imag(np.conj(psi.values) * eta.values), grid, exp_tails))


@dataclass(frozen=True)
class GeneratorAction:
    """``C chi`` split into its regular part and point masses at the origin.

    ``kink`` comes from the jump of ``chi'`` at the origin, ``coupling`` from the
    point interaction; both are coefficients of ``delta(x)`` in complex form.
    """

    smooth: FieldState
    coupling: complex
    kink: complex

    @property
    def delta(self):
        return self.coupling + self.kink


def _second_derivative(v, h, i0):
    d2 = np.empty_like(v)
    d2[1:-1] = (v[2:] - 2 * v[1:-1] + v[:-2]) / h ** 2
    d2[0] = (2 * v[0] - 5 * v[1] + 4 * v[2] - v[3]) / h ** 2
    d2[-1] = (2 * v[-1] - 5 * v[-2] + 4 * v[-3] - v[-4]) / h ** 2
    plus = (2 * v[i0] - 5 * v[i0 + 1] + 4 * v[i0 + 2] - v[i0 + 3]) / h ** 2
    minus = (2 * v[i0] - 5 * v[i0 - 1] + 4 * v[i0 - 2] - v[i0 - 3]) / h ** 2
    d2[i0] = 0.5 * (plus + minus)
    return d2


def derivative_jump(v, h, i0):
    """``v'(0+) - v'(0-)`` from second-order one-sided differences."""
    plus = (-3 * v[i0] + 4 * v[i0 + 1] - v[i0 + 2]) / (2 * h)
    minus = (3 * v[i0] - 4 * v[i0 - 1] + v[i0 - 2]) / (2 * h)
    return plus - minus


def apply_generator(chi, wave):
    grid = chi.grid
    v = chi.values
    i0 = grid.origin
    smooth = -1j * (-_second_derivative(v, grid.h, i0) + wave.omega * v)
    c0 = v[i0]
    coupling = 1j * (wave.a * c0 + wave.b * c0.real)
    kink = 1j * derivative_jump(v, grid.h, i0)
    return GeneratorAction(chi.like(smooth), complex(coupling), complex(kink))


@dataclass(frozen=True)
class ProjectionResult:
    b0: float
    b1: float
    tangential: FieldState
    transversal: FieldState
    point_mass: complex = 0.0


def _pairing_coefficients(chi, point_mass, T0, T1, mu, exp_tails):
    om1 = 0.0 if chi is None else symplectic_form(chi, T1, exp_tails)
    om0 = 0.0 if chi is None else symplectic_form(chi, T0, exp_tails)
    if point_mass:
        i0 = T0.grid.origin
        om1 += float(np.imag(np.conj(point_mass) * T1.values[i0]))
        om0 += float(np.imag(np.conj(point_mass) * T0.values[i0]))
    return -om1 / mu, om0 / mu


def project_p0(chi, wave, point_mass=0.0, grid=None, exp_tails=False):
    """Symplectic projection onto the tangent plane ``span(T0, T1)``.

    ``chi`` may be ``None`` together with a ``grid`` when only a point mass
    ``point_mass * delta(x)`` is projected.
    """
    grid = chi.grid if chi is not None else grid
    mu_omega(wave)  # raises on a degenerate wave
    T0, T1 = tangent_frame(wave, grid)
    # the discrete pairing makes the projection exactly orthogonal on the grid
    mu = -symplectic_form(T0, T1, exp_tails)
    b0, b1 = _pairing_coefficients(chi, point_mass, T0, T1, mu, exp_tails)
    tangential = T0 * b0 + T1 * b1
    base = chi if chi is not None else FieldState(grid, np.zeros(grid.n))
    return ProjectionResult(b0, b1, tangential, base - tangential, complex(point_mass))


def project_pc(chi, wave, exp_tails=False):
    return project_p0(chi, wave, exp_tails=exp_tails).transversal


# ---------------------------------------------------------------------------
# origin-value Volterra solver

def origin_kernel(dt, n, omega=0.0):
    """Kernel ``K_k = i w_k exp(-i omega tau_k)`` of the origin equation and its end correction."""
    if not (0 < dt <= 1e-2):
        raise StepSizeError(f"time step must lie in (0, 1e-2], got {dt}")
    w, left = point_source_weights([0.0], dt, n)
    w, left = w[0], left[0]
    # at the origin the weights are real multiples of (4 pi i)^{-1/2}
    real_w = w * np.sqrt(4j * math.pi)
    if np.any(real_w.real <= 0) or np.any(np.abs(real_w.imag) > 1e-10 * np.abs(real_w)):
        raise StepSizeError("product-integration weights lost positivity")
    phase = np.exp(-1j * omega * dt * np.arange(n + 1))
    return 1j * w * phase, 1j * left * phase, w


# Starting weights on s = 0, dt, 2 dt that vanish on 1 and s and carry a unit
# defect on sqrt(s) (columns: two-node version for the first step, three-node
# version afterwards), in units where dt = 1.
_START2 = np.array([-1.0, 1.0])
_START3 = np.linalg.solve(np.array([[1.0, 1.0, 1.0],
                                    [0.0, 1.0, 2.0],
                                    [0.0, 1.0, math.sqrt(2.0)]]), [0.0, 0.0, 1.0])


def starting_weights(defect, dt):
    """Correction weights for the ``sqrt(s)`` part of a source near ``s = 0``.

    Solutions of Abel-kernel equations behave like ``u0 + c sqrt(t)`` when the
    data do not satisfy the point-interaction jump condition; hat-function
    product integration is only ``O(dt^{3/2})`` for such sources.  Given the
    quadrature defect on ``sqrt(s)`` for each target step (steps along the last
    axis, starting at step 0), returns weights of shape ``defect.shape + (3,)``
    on the nodes ``s = 0, dt, 2 dt`` that restore exactness on ``sqrt(s)``
    while keeping it on ``1`` and ``s``.
    """
    defect = np.asarray(defect)
    e = np.zeros(defect.shape + (3,), complex)
    d = defect / math.sqrt(dt)
    if defect.shape[-1] > 1:
        e[..., 1, :2] = d[..., 1, None] * _START2
    if defect.shape[-1] > 2:
        e[..., 2:, :] = d[..., 2:, None] * _START3
    return e


def solve_origin(free, dt, omega, local, solve_local, starting=True):
    """March ``u_n = free_n + i int_0^{t_n} W_omega(0, t_n - s) local(u(s)) ds`` forward.

    ``local`` maps ``u`` to the point-source strength and
    ``solve_local(rhs, K0, u_prev, u_prev2)`` solves ``u - K0 local(u) = rhs``
    for the new value.  Returns ``(u, g)`` with ``g = local(u)``.
    """
    n = len(free) - 1
    K, Kend, w = origin_kernel(dt, n, omega)
    phase = np.exp(-1j * omega * dt * np.arange(n + 1))
    E = np.zeros((n + 1, 3), complex)
    if starting and n >= 1:
        sq = np.sqrt(dt * np.arange(n + 1))
        exact = sqrt_source_moment(0.0, dt * np.arange(n + 1))
        E = starting_weights(exact - signal.fftconvolve(w, sq)[: n + 1], dt)
        # the corrected source sits at s_j, i.e. kernel lag m - j
        E = 1j * E
    u = np.empty(n + 1, complex)
    grev = np.empty(n + 1, complex)
    u[0] = free[0]
    g0 = local(u[0])
    grev[n] = g0
    for m in range(1, n + 1):
        hist = np.dot(K[1: m + 1], grev[n - m + 1:]) - Kend[m] * g0
        K0 = K[0]
        for j in range(min(m, 2) + 1):
            c = E[m, j] * phase[m - j]
            if j == m:
                K0 = K0 + c
            else:
                hist = hist + c * grev[n - j]
        u[m] = solve_local(free[m] + hist, K0, u[m - 1], u[m - 2] if m > 1 else u[m - 1])
        grev[n - m] = local(u[m])
    return u, grev[::-1].copy()


def _linear_local(wave):
    a, b = wave.a, wave.b

    def local(u):
        return a * u + b * np.real(u)

    def solve_local(rhs, K0, *_):
        A1 = 1 - K0 * (a + b)
        A2 = 1j * (1 - K0 * a)
        M = np.array([[A1.real, A2.real], [A1.imag, A2.imag]])
        p, q = np.linalg.solve(M, [rhs.real, rhs.imag])
        return p + 1j * q

    return local, solve_local


def duhamel_fields(g, dt, times, r, omega=0.0, stride=1, starting=True):
    """``i int_0^t W_omega(r, t - s) g(s) ds`` for each requested time and radius.

    ``g`` holds the point-source strength at every step; ``stride`` coarsens the
    time grid used for the quadrature.  Returns shape ``(len(r), len(times))``.
    """
    r = np.atleast_1d(np.asarray(r, dtype=float))
    g = np.asarray(g)[::stride]
    dts = dt * stride
    times = np.atleast_1d(np.asarray(times, dtype=float))
    steps = [int(round(t / dts)) for t in times]
    for s, t in zip(steps, times):
        if abs(s * dts - t) > 1e-9 * max(1.0, t) or s >= g.size:
            raise DomainError(f"time {t} is not available at stride {stride}")
    nmax = max(steps) if steps else 0
    ns = len(steps)
    out = np.zeros((r.size, ns), complex)
    if nmax == 0:
        return out
    phase = np.exp(-1j * omega * dts * np.arange(nmax + 1))
    plain = np.zeros((r.size, ns), complex)
    chunk = max(1, int(4e6 // max(r.size, 1)))
    for k0 in range(0, nmax + 1, chunk):
        k1 = min(nmax + 1, k0 + chunk)
        w, _ = _weights_block(r, dts, k0, k1)
        G = np.zeros((k1 - k0, 2 * ns), complex)
        for j, s in enumerate(steps):
            ks = np.arange(k0, min(k1, s + 1))
            if ks.size:
                G[ks - k0, j] = phase[ks] * g[s - ks]
                G[ks - k0, ns + j] = np.sqrt((s - ks) * dts)
        prod = w @ G
        out += prod[:, :ns]
        plain += prod[:, ns:]
    for j, s in enumerate(steps):
        if s == 0:
            continue
        _, left = _weights_block(r, dts, s, s + 1)
        out[:, j] -= left[:, 0] * phase[s] * g[0]
        if starting:
            defect = sqrt_source_moment(r, s * dts) - plain[:, j]
            # pad to a step axis so that the step count selects the stencil
            pad = np.zeros((r.size, min(s, 2) + 1), complex)
            pad[:, -1] = defect
            e = starting_weights(pad, dts)[:, -1, :]
            for i in range(min(s, 2) + 1):
                out[:, j] += e[:, i] * phase[s - i] * g[i]
    return 1j * out


def _weights_block(r, dt, k0, k1):
    """Hat weights ``w_k`` and right-half parts for ``k`` in ``[k0, k1)``."""
    tau = dt * np.arange(max(k0 - 1, 0), k1 + 1)
    A0, A1 = kernel_time_antiderivatives(r[:, None], tau[None, :])
    dA0 = np.diff(A0, axis=1)
    dA1 = np.diff(A1, axis=1)
    left = (tau[None, 1:] * dA0 - dA1) / dt
    right = (dA1 - tau[None, :-1] * dA0) / dt
    if k0 == 0:
        w = left[:, :k1].copy()
        w[:, 1:] += right[:, : k1 - 1]
        return w, left[:, :k1]
    w = left[:, 1:] + right[:, :-1]
    return w, left[:, 1:]


def mirror_even(grid, half_values):
    """Values on the full grid from values at ``x >= 0`` for an even field."""
    if half_values.size != grid.origin + 1:
        raise DomainError("half-grid values do not match the grid")
    return np.concatenate([half_values[:0:-1], half_values])


def evolve_linear(chi0, wave, t_end, dt, snapshot_times=(), stride=1):
    """Linearized flow ``exp(C t) chi0``.

    Returns ``(trace, snapshots)``: the boundary trace ``chi(0, t)`` at every
    step and a dict ``{t: FieldState}`` for the requested snapshot times.
    """
    if dt > 1e-2:
        raise StepSizeError(f"time step {dt} exceeds 1e-2")
    n = int(round(t_end / dt))
    times = dt * np.arange(n + 1)
    free = free_flow_points(chi0, [0.0], times)[:, 0] * np.exp(-1j * wave.omega * times)
    local, solve_local = _linear_local(wave)
    u, g = solve_origin(free, dt, wave.omega, local, solve_local)
    trace = BoundaryTrace(times, u)
    snaps = reconstruct_linear(trace, g, chi0, wave, snapshot_times, stride)
    return trace, snaps


def reconstruct_linear(trace, g, chi0, wave, snapshot_times, stride=1):
    grid = chi0.grid
    snap = {}
    if len(snapshot_times) == 0:
        return snap
    ts = np.asarray(snapshot_times, dtype=float)
    r = grid.x[grid.origin:]
    duh = duhamel_fields(g, trace.dt, ts, r, wave.omega, stride)
    for j, t in enumerate(ts):
        free = free_flow_grid(chi0, t).values * np.exp(-1j * wave.omega * t)
        vals = free + mirror_even(grid, duh[:, j])
        snap[float(t)] = FieldState(grid, vals)
    warn_boundary_mass(snap.values())
    return snap


def boundary_mass_fraction(field):
    """Share of ``int |f|^2`` held by the outer 5% of the grid on each side."""
    v = np.abs(field.values) ** 2
    total = v.sum()
    m = max(1, int(0.05 * v.size))
    return float((v[:m].sum() + v[-m:].sum()) / total) if total > 0 else 0.0


def warn_boundary_mass(fields, tol=1e-8):
    """One warning for a batch of fields whose mass reaches the grid edges.

    The fields are exact on the grid (no boundary condition is imposed), but
    norms computed on the grid miss whatever has left it.
    """
    worst = max((boundary_mass_fraction(f) for f in fields), default=0.0)
    if worst > tol:
        warnings.warn(f"field mass near the grid boundary: fraction up to {worst:.1e}", stacklevel=3)


# ---------------------------------------------------------------------------
# delta initial data

@dataclass(frozen=True)
class DeltaResponse:
    """``varsigma = sqrt(t) exp(C t) (e delta)``, its sup norm and the small-time bound."""

    times: np.ndarray
    origin: np.ndarray
    sup_norm: np.ndarray
    bound: np.ndarray

    @property
    def within_bound(self):
        return bool(np.all(self.sup_norm <= self.bound))


def _chebyshev_integral(func, t, order=64):
    """``int_0^t (t - s)^{-1/2} s^{-1/2} func(s) ds`` by Gauss-Chebyshev quadrature."""
    xi = np.cos((2 * np.arange(1, order + 1) - 1) * np.pi / (2 * order))
    s = t * (1 + xi) / 2
    return np.pi / order * np.sum(func(s), axis=-1)


def delta_response(wave, times, direction=1.0, n_steps=2000, x_max_factor=8.0, n_x=801):
    """Small-time response to a point mass ``direction * delta(x)``.

    The singular free part ``direction exp(-i omega t) / sqrt(4 pi i t)`` is
    split off; its first Duhamel iterate is integrated with Gauss-Chebyshev
    weights, and the bounded remainder of the origin trace is solved by
    product integration on a uniform grid up to ``max(times)``.
    """
    times = np.sort(np.atleast_1d(np.asarray(times, dtype=float)))
    t_max = times[-1]
    ab = abs(wave.a) + abs(wave.b)
    if not 0.5 * math.sqrt(math.pi * t_max) * ab < 0.9:
        raise DomainError("t_max too large for the small-time bound")
    a, b, om = wave.a, wave.b, wave.omega
    e = complex(direction)
    c = e / np.sqrt(4j * math.pi)

    def local(u):
        return a * u + b * np.real(u)

    def forcing(t):
        # i int_0^t K(t - s) G(u_free(s)) ds, u_free(s) = c exp(-i om s) s^{-1/2}
        def integrand(s):
            return np.exp(-1j * om * (t - s)) * local(c * np.exp(-1j * om * s))
        return 1j / np.sqrt(4j * math.pi) * _chebyshev_integral(integrand, t)

    dt = t_max / n_steps
    grid_t = dt * np.arange(n_steps + 1)
    f = np.array([forcing(t) if t > 0 else 0.0 for t in grid_t])
    _, solve_local = _linear_local(wave)
    w, _ = solve_origin(f, dt, om, local, solve_local)
    origin = []
    sups = []
    for t in times:
        k = int(round(t / dt))
        u_free = c * np.exp(-1j * om * t) / math.sqrt(t)
        w_t = np.interp(t, grid_t, w.real) + 1j * np.interp(t, grid_t, w.imag)
        origin.append(math.sqrt(t) * (u_free + w_t))
        xs = np.linspace(0.0, x_max_factor * math.sqrt(t), n_x)
        sups.append(np.max(np.abs(_delta_field(xs, t, k, dt, w, c, wave))) * math.sqrt(t))
    bound = 1 / (2 * SQRT_PI) / (1 - 0.5 * np.sqrt(np.pi * times) * ab)
    return DeltaResponse(times, np.array(origin), np.array(sups), bound * abs(e))


def _delta_field(xs, t, k, dt, w, c, wave):
    """``chi_delta(x, t)`` at radii ``xs`` for a step time ``t = k dt``."""
    a, b, om = wave.a, wave.b, wave.omega

    def local(u):
        return a * u + b * np.real(u)

    free = c * np.exp(1j * xs ** 2 / (4 * t) - 1j * om * t) / math.sqrt(t)
    # regular part: product integration of G(w) on the step grid
    g_w = local(w[: k + 1])
    reg = duhamel_fields(g_w, dt, [k * dt], xs, om)[:, 0] if k > 0 else 0.0
    # singular part: G(u_free(s)) = s^{-1/2} G(c exp(-i om s)); split at t/2
    sing = _singular_source(xs, t, lambda s: local(c * np.exp(-1j * om * s)), om)
    return free + reg + sing


def _singular_source(xs, t, amp, om, order=48, n_fine=400):
    """``i int_0^t W_omega(x, t - s) s^{-1/2} amp(s) ds``."""
    # [0, t/2]: Gauss-Jacobi in s with weight s^{-1/2}; the kernel is smooth here
    nodes, weights = special.roots_jacobi(order, 0.0, -0.5)
    s = t / 4 * (1 + nodes)
    wts = weights * (t / 4) ** 0.5
    tau = t - s
    kern = np.exp(1j * xs[:, None] ** 2 / (4 * tau[None, :]) - 1j * om * tau[None, :]) / np.sqrt(4j * math.pi * tau[None, :])
    first = kern @ (wts * amp(s))
    # [t/2, t]: hat-function product integration in tau = t - s on [0, t/2]
    dtau = (t / 2) / n_fine
    taus = dtau * np.arange(n_fine + 1)
    phi = np.exp(-1j * om * taus) * amp(t - taus) / np.sqrt(t - taus)
    w, left = point_source_weights(xs, dtau, n_fine)
    # the last hat is cut at tau = t/2
    second = w @ phi - left[:, -1] * phi[-1]
    return 1j * (first + second)
