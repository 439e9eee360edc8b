"""Nonlinear coupling, solitary waves and the tangent frame of the solitary manifold.

The field obeys ``i psi_t = -psi_xx - delta(x) F(psi(0, t))`` with the
U(1)-invariant coupling ``F(psi) = a(|psi|^2) psi``.  Solitary waves are
``C exp(-kappa |x|) exp(i omega t + i theta)`` with ``2 kappa = a(C^2)`` and
``omega = kappa^2``.

Complex fields double as real two-component fields through
``chi = chi_1 + i chi_2``; multiplication by ``i`` is the rotation ``j``.
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import interpolate, optimize


class SolwaveError(Exception):
    """Base class for errors raised by this package."""


class DomainError(SolwaveError, ValueError):
    pass


class NoSolitaryWave(SolwaveError, ValueError):
    pass


class DegenerateParametrization(SolwaveError):
    """Raised when ``a'(C^2) = 0`` so that ``omega`` is not a coordinate."""


class ZeroMuError(SolwaveError):
    """Raised when the symplectic pairing of the tangent frame vanishes."""


THRESHOLD_RTOL = 1e-10


@dataclass(frozen=True)
class NonlinearCoupling:
    """Radial coupling ``a(s)``, ``s = |psi|^2``.

    Use :meth:`polynomial` or :meth:`tabulated` to build one.
    """

    kind: str
    coeffs: tuple = ()
    table: tuple = ()
    s_max: float = math.inf
    _spline: object = field(default=None, repr=False, compare=False)

    @classmethod
    def polynomial(cls, coeffs):
        """``a(s) = sum_k coeffs[k] s**k``, lowest degree first."""
        c = tuple(float(v) for v in coeffs)
        if not c or not all(math.isfinite(v) for v in c):
            raise DomainError("polynomial coupling needs finite coefficients")
        return cls(kind="polynomial", coeffs=c)

    @classmethod
    def tabulated(cls, s, a):
        s = np.asarray(s, dtype=float)
        a = np.asarray(a, dtype=float)
        if s.ndim != 1 or s.shape != a.shape or s.size < 4:
            raise DomainError("tabulated coupling needs matching 1d arrays of length >= 4")
        if s[0] != 0.0 or np.any(np.diff(s) <= 0):
            raise DomainError("tabulated coupling must start at s=0 and increase")
        spline = interpolate.CubicSpline(s, a)
        return cls(kind="custom-tabulated", table=(tuple(s), tuple(a)),
                   s_max=float(s[-1]), _spline=spline)

    def _check(self, s):
        s = np.asarray(s, dtype=float)
        if not np.all(np.isfinite(s)) or np.any(s < 0):
            raise DomainError("coupling argument s must be finite and >= 0")
        if np.any(s > self.s_max):
            raise DomainError(f"s exceeds the tabulated range [0, {self.s_max}]")
        return s

    def a(self, s):
        s = self._check(s)
        if self.kind == "polynomial":
            return np.polynomial.polynomial.polyval(s, self.coeffs)
        return self._spline(s)

    def a_prime(self, s):
        s = self._check(s)
        if self.kind == "polynomial":
            return np.polynomial.polynomial.polyval(s, np.polynomial.polynomial.polyder(self.coeffs))
        return self._spline(s, 1)

    def antiderivative(self, s):
        """``A(s) = int_0^s a``; the potential is ``U = -A/2``."""
        s = self._check(s)
        if self.kind == "polynomial":
            return np.polynomial.polynomial.polyval(s, np.polynomial.polynomial.polyint(self.coeffs))
        return self._spline.antiderivative()(s)

    def force(self, psi):
        """``F(psi) = a(|psi|^2) psi``."""
        psi = np.asarray(psi)
        return self.a(np.abs(psi) ** 2) * psi

    @property
    def is_constant(self):
        return self.kind == "polynomial" and all(c == 0 for c in self.coeffs[1:])

    def potential_bounded_below(self):
        """Whether ``U = -A/2`` obeys ``U(z) >= A0 - B |z|^2`` for all ``z``.

        For a polynomial this holds iff the top nonconstant coefficient of
        ``a`` is negative (or ``a`` is constant).  A table only covers a bounded
        range of ``s``, so the answer is ``None``.
        """
        if self.kind != "polynomial":
            return None
        top = [c for c in self.coeffs[1:] if c != 0]
        return not top or top[-1] < 0


def coupling_eval(coupling, s):
    """Return ``(a(s), a'(s))`` for scalar ``s >= 0``."""
    s = float(s)
    if not math.isfinite(s) or s < 0:
        raise DomainError(f"coupling argument must be finite and >= 0, got {s}")
    return float(coupling.a(s)), float(coupling.a_prime(s))


@dataclass(frozen=True)
class SolitaryWave:
    """A point ``(C, kappa, omega, theta)`` on the solitary manifold."""

    coupling: NonlinearCoupling
    C: float
    kappa: float
    omega: float
    theta: float = 0.0
    a: float = 0.0
    a_prime: float = 0.0

    @property
    def b(self):
        return 2.0 * self.a_prime * self.C ** 2

    @property
    def alpha(self):
        return self.a + self.b / 2

    @property
    def beta(self):
        return self.b / 2

    @property
    def omega_prime(self):
        """``d omega / d C = a a' C`` along the manifold."""
        return self.a * self.a_prime * self.C

    @property
    def charge(self):
        """``int |psi_omega|^2 = C^2 / kappa``."""
        return self.C ** 2 / self.kappa

    def profile(self, x):
        return self.C * np.exp(-self.kappa * np.abs(x))

    def domega_profile(self, x):
        """Closed-form ``d psi_omega / d omega``."""
        if self.a_prime == 0.0:
            raise DegenerateParametrization("a'(C^2) = 0: omega does not parametrize the manifold")
        ax = np.abs(x)
        dC = 1.0 / self.omega_prime
        dk = 1.0 / (2.0 * self.kappa)
        return (dC - self.C * ax * dk) * np.exp(-self.kappa * ax)

    def field(self, grid, t=0.0):
        """The wave ``psi_omega(x) exp(i(omega t + theta))`` sampled on ``grid``."""
        phase = np.exp(1j * (self.omega * t + self.theta))
        return FieldState(grid, self.profile(grid.x) * phase)

    def with_theta(self, theta):
        return solitary_from_C(self.coupling, self.C, theta)


def solitary_from_C(coupling, C, theta=0.0):
    C = float(C)
    if not (C > 0 and math.isfinite(C)):
        raise DomainError(f"amplitude C must be positive, got {C}")
    a, ap = coupling_eval(coupling, C * C)
    if a <= 0:
        raise NoSolitaryWave(f"no solitary wave at this amplitude: a(C^2) = {a} <= 0")
    kappa = a / 2
    return SolitaryWave(coupling, C, kappa, kappa * kappa, float(theta), a, ap)


def solitary_from_omega(coupling, omega, bracket=(1e-3, 10.0), theta=0.0, n_scan=1024):
    """All waves with frequency ``omega`` and amplitude inside ``bracket``.

    Roots of ``a(C^2) = 2 sqrt(omega)`` are located by a sign-change scan on a
    uniform lattice, bracketed with Brent's method and Newton-polished.
    Tangential (even multiplicity) roots between lattice points are not seen.
    """
    omega = float(omega)
    lo, hi = (float(v) for v in bracket)
    if not omega > 0:
        raise DomainError("omega must be positive")
    if not (0 < lo < hi):
        raise DomainError("bracket must satisfy 0 < C_min < C_max")
    if coupling.is_constant:
        raise DegenerateParametrization("degenerate: a'≡0, amplitude not determined by omega")
    target = 2.0 * math.sqrt(omega)

    def f(C):
        return float(coupling.a(C * C)) - target

    def df(C):
        return 2.0 * C * float(coupling.a_prime(C * C))

    Cs = np.linspace(lo, hi, n_scan)
    vals = coupling.a(Cs * Cs) - target
    roots = []
    for i in range(n_scan):
        if vals[i] == 0.0:
            roots.append(Cs[i])
        elif i + 1 < n_scan and vals[i] * vals[i + 1] < 0:
            roots.append(optimize.brentq(f, Cs[i], Cs[i + 1], xtol=1e-15, rtol=1e-15))
    waves = []
    for C in roots:
        for _ in range(3):
            d = df(C)
            if d == 0.0:
                break
            step = f(C) / d
            if abs(step) > 1e-8 * C:
                break
            C -= step
        waves.append(solitary_from_C(coupling, C, theta))
    return sorted(waves, key=lambda w: w.C)


def mu_omega(wave):
    """``mu = (1/2) d/d omega int |psi_omega|^2``; nonzero means a symplectic tangent plane."""
    if wave.a_prime == 0.0:
        raise DegenerateParametrization("a'(C^2) = 0: omega does not parametrize the manifold")
    crit = wave.a / wave.C ** 2
    if abs(wave.a_prime - crit) <= THRESHOLD_RTOL * crit:
        raise ZeroMuError("mu_omega = 0 (a' = a/C^2): symplectic projector is singular")
    dN = 2 * wave.C / wave.kappa * (1 - wave.a_prime * wave.C ** 2 / wave.a)
    return 0.5 * dN / wave.omega_prime


class SpectralCase(str, enum.Enum):
    STABLE_I = "Stable_I"
    OSCILLATORY_II = "OscillatoryModes_II"
    DEGENERATE_III = "Degenerate_III"
    UNSTABLE_IV = "Unstable_IV"
    ZERO_PRIME = "ZeroPrime"


def thresholds(wave):
    """``(a / (sqrt(2) C^2), a / C^2)``."""
    crit = wave.a / wave.C ** 2
    return crit / math.sqrt(2.0), crit


def check_spectral_condition(wave):
    ap = wave.a_prime
    t_osc, t_deg = thresholds(wave)
    if ap == 0.0:
        return SpectralCase.ZERO_PRIME
    if abs(ap - t_deg) <= THRESHOLD_RTOL * t_deg:
        return SpectralCase.DEGENERATE_III
    if ap > t_deg:
        return SpectralCase.UNSTABLE_IV
    if ap >= t_osc:
        return SpectralCase.OSCILLATORY_II
    return SpectralCase.STABLE_I


@dataclass(frozen=True)
class Grid:
    """Uniform symmetric grid on ``[-L, L]`` with an odd number of nodes."""

    L: float
    n: int

    def __post_init__(self):
        if not (self.L > 0 and math.isfinite(self.L)):
            raise DomainError(f"grid half length must be positive, got {self.L}")
        if int(self.n) != self.n or self.n < 3 or self.n % 2 == 0:
            raise DomainError(f"grid n must be an odd integer >= 3, got {self.n}")

    @property
    def h(self):
        return 2.0 * self.L / (self.n - 1)

    @property
    def x(self):
        m = (self.n - 1) // 2
        return np.arange(-m, m + 1) * self.h

    @property
    def origin(self):
        return (self.n - 1) // 2

    def check_decay(self, kappa):
        if math.exp(-kappa * self.L) > 1e-12:
            warnings.warn(f"grid half length {self.L} too short for decay rate {kappa}: "
                          f"exp(-kappa L) = {math.exp(-kappa * self.L):.2e} > 1e-12", stacklevel=2)
        return self

    @classmethod
    def for_wave(cls, wave, n=4001):
        return cls(max(30.0 / wave.kappa, 50.0), n)


@dataclass(frozen=True)
class FieldState:
    """Complex samples on a grid, i.e. a real pair ``(Re, Im)`` per node."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape != (self.grid.n,):
            raise DomainError(f"field has {v.shape} values for a grid of {self.grid.n} nodes")
        if not np.all(np.isfinite(v)):
            raise DomainError("field values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def x(self):
        return self.grid.x

    @property
    def real_pair(self):
        return self.values.real, self.values.imag

    @property
    def at_origin(self):
        return self.values[self.grid.origin]

    def like(self, values):
        return FieldState(self.grid, values)

    def __add__(self, other):
        return self.like(self.values + _vals(other, self.grid))

    def __sub__(self, other):
        return self.like(self.values - _vals(other, self.grid))

    def __mul__(self, c):
        return self.like(self.values * c)

    __rmul__ = __mul__

    def __neg__(self):
        return self.like(-self.values)


def _vals(other, grid):
    if isinstance(other, FieldState):
        if other.grid != grid:
            raise DomainError("fields live on different grids")
        return other.values
    return other


def tangent_frame(wave, grid):
    """``T0 = j Phi_omega`` and ``T1 = d Phi_omega / d omega`` as complex fields."""
    x = grid.x
    T0 = FieldState(grid, 1j * wave.profile(x))
    T1 = FieldState(grid, wave.domega_profile(x).astype(complex))
    return T0, T1
