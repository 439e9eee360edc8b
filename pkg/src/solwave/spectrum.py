"""Discrete spectrum of the linearization at a solitary wave.

Eigenvalues ``lambda`` of the generator are zeros of the determinant

    D(lambda) = (2 i k_+ + alpha)(2 i k_- + alpha) - beta^2,

with ``k_pm(lambda) = sqrt(-omega -+ i lambda)`` taken on the sheet where
``Im k_pm > 0``.  ``k_+`` has its cut on ``[i omega, i inf)`` and ``k_-`` on
``(-i inf, -i omega]``; on a cut the one-sided limit is selected explicitly.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .model import (DomainError, SpectralCase, check_spectral_condition,
                    thresholds)

CUT_TOL = 1e-14
EXCLUSION_RADIUS = 1e-3


@dataclass(frozen=True)
class BranchPoint:
    """A spectral parameter together with the side of a cut it is seen from.

    ``plus_side`` is the limit from ``Re lambda > 0`` and ``minus_side`` the
    limit from ``Re lambda < 0``.
    """

    lam: complex
    cut_side: str = "off_cut"

    def __post_init__(self):
        object.__setattr__(self, "lam", complex(self.lam))
        if self.cut_side not in ("off_cut", "plus_side", "minus_side"):
            raise DomainError(f"unknown cut side {self.cut_side!r}")

    def check(self, omega):
        on_cut = abs(self.lam.real) <= CUT_TOL and abs(self.lam.imag) >= omega - CUT_TOL
        if self.cut_side != "off_cut" and not on_cut:
            raise DomainError("a cut side was given for a point off the cuts")
        return on_cut


def _as_point(lam):
    return lam if isinstance(lam, BranchPoint) else BranchPoint(lam)


def k_branch(lam, omega, sign):
    """``k_+`` (``sign='plus'``) or ``k_-`` (``sign='minus'``) on the physical sheet."""
    if not omega > 0:
        raise DomainError("omega must be positive")
    p = _as_point(lam)
    p.check(omega)
    if sign == "plus":
        arg = -omega - 1j * p.lam
        own_cut = p.lam.imag > 0
    elif sign == "minus":
        arg = -omega + 1j * p.lam
        own_cut = p.lam.imag < 0
    else:
        raise DomainError(f"sign must be 'plus' or 'minus', got {sign!r}")
    on_own_cut = abs(p.lam.real) <= CUT_TOL and abs(p.lam.imag) >= omega and own_cut
    if on_own_cut and p.cut_side != "off_cut":
        # the argument is real and >= 0 on the cut; approach it from the chosen side
        root = math.sqrt(max(arg.real, 0.0))
        side = 1.0 if p.cut_side == "plus_side" else -1.0
        # -omega - i(eps + i mu) has imaginary part -eps for k_+, +eps for k_-
        im_arg = -side if sign == "plus" else side
        return complex(root if im_arg > 0 else -root)
    k = np.sqrt(complex(arg))
    if k.imag <= 0:
        k = -k
    return complex(k)


def _ks(lam, wave):
    return k_branch(lam, wave.omega, "plus"), k_branch(lam, wave.omega, "minus")


def determinant(lam, wave, form="product"):
    """``D(lambda)``; ``form`` is ``product`` or ``expanded``."""
    kp, km = _ks(lam, wave)
    al, be = wave.alpha, wave.beta
    if form == "product":
        return (2j * kp + al) * (2j * km + al) - be * be
    if form == "expanded":
        return al * al + 2j * al * (kp + km) - 4 * kp * km - be * be
    raise DomainError(f"unknown determinant form {form!r}")


def determinant_derivative(lam, wave):
    """``dD/dlambda`` off the cuts, using ``k_pm' = -+ i / (2 k_pm)``."""
    kp, km = _ks(lam, wave)
    dkp = -1j / (2 * kp)
    dkm = 1j / (2 * km)
    al = wave.alpha
    return 2j * al * (dkp + dkm) - 4 * (dkp * km + kp * dkm)


def taylor_coeff_zero(wave):
    """Coefficient of ``lambda^2`` in ``D`` at the origin: ``1/omega - b / (4 omega^{3/2})``."""
    om = wave.omega
    return 1.0 / om - wave.b / (4.0 * om ** 1.5)


def closed_form_roots(gamma, omega):
    """``i (gamma/2) sqrt(4 omega - gamma^2)`` and its negative."""
    lam = 1j * gamma / 2 * np.sqrt(complex(4 * omega - gamma * gamma))
    return [lam, -lam]


@dataclass(frozen=True)
class SpectrumReport:
    case: str
    zero_multiplicity: int
    nonzero_roots: tuple
    gamma1: float
    gamma2: float
    thresholds: tuple
    taylor_coeff: float
    condition: SpectralCase = field(default=None)

    def to_dict(self):
        return {
            "case": self.case,
            "zero_multiplicity": self.zero_multiplicity,
            "roots": [{"re": float(r.real), "im": float(r.imag)} for r in self.nonzero_roots],
            "gamma1": self.gamma1,
            "gamma2": self.gamma2,
            "thresholds": list(self.thresholds),
            "taylor_coeff": self.taylor_coeff,
        }


_CASES = {
    SpectralCase.STABLE_I: "I",
    SpectralCase.ZERO_PRIME: "I",
    SpectralCase.OSCILLATORY_II: "II",
    SpectralCase.DEGENERATE_III: "III",
    SpectralCase.UNSTABLE_IV: "IV",
}


def classify(wave):
    """Discrete spectrum from the closed-form roots, keeping those on the physical sheet."""
    cond = check_spectral_condition(wave)
    case = _CASES[cond]
    g1, g2 = wave.a, wave.b / 2
    roots = ()
    if case == "II":
        lam = closed_form_roots(abs(g2), wave.omega)[0]
        roots = (1j * abs(lam), -1j * abs(lam))
    elif case == "IV":
        lam = closed_form_roots(g2, wave.omega)[0]
        roots = (abs(lam) + 0j, -abs(lam) + 0j)
    taylor = 0.0 if case == "III" else taylor_coeff_zero(wave)
    return SpectrumReport(case, 4 if case == "III" else 2, roots, float(g1), float(g2),
                          tuple(float(t) for t in thresholds(wave)), float(taylor), cond)


def _excluded(lam, omega, radius):
    lam = np.asarray(lam)
    near = (np.abs(lam) < radius) | (np.abs(lam - 1j * omega) < radius) | (np.abs(lam + 1j * omega) < radius)
    cut = (np.abs(lam.real) < radius) & (np.abs(lam.imag) >= omega - radius)
    return near | cut


def _winding(vals):
    """Winding number of a closed polygonal path of nonzero values."""
    ph = np.angle(np.concatenate([vals, vals[:1]]))
    d = np.diff(ph)
    d = (d + np.pi) % (2 * np.pi) - np.pi
    return int(round(d.sum() / (2 * np.pi)))


def rootfind_physical(wave, region, density=(161, 161), exclude=EXCLUSION_RADIUS,
                      tol=1e-10, max_iter=50):
    """Zeros of ``D`` in the rectangle ``region = (re_lo, re_hi, im_lo, im_hi)``.

    Every lattice cell is tested for a nonzero winding number of ``D`` around
    its boundary; each such cell seeds a complex Newton iteration.  Cells that
    touch or straddle the branch cuts or the disks around ``0`` and
    ``+-i omega`` are skipped, so a root closer to a threshold than a cell
    width needs a finer local search.
    """
    re_lo, re_hi, im_lo, im_hi = (float(v) for v in region)
    if not (re_lo < re_hi and im_lo < im_hi):
        raise DomainError("empty search region")
    nx, ny = density
    # offset the lattice by an irrational fraction of a cell so that roots on
    # symmetry lines (real or imaginary axis) never sit on a cell edge
    dx = (re_hi - re_lo) / (nx - 1)
    dy = (im_hi - im_lo) / (ny - 1)
    xs = re_lo - (math.sqrt(2) - 1) * dx + dx * np.arange(nx + 1)
    ys = im_lo - (math.sqrt(3) - 1.5) * dy + dy * np.arange(ny + 1)
    nx, ny = xs.size, ys.size
    om = wave.omega
    lattice = xs[None, :] + 1j * ys[:, None]
    bad = _excluded(lattice, om, exclude)
    D = np.full(lattice.shape, np.nan, complex)
    for idx in zip(*np.nonzero(~bad)):
        D[idx] = determinant(lattice[idx], wave)
    roots = []
    for j in range(ny - 1):
        for i in range(nx - 1):
            corners = [(j, i), (j, i + 1), (j + 1, i + 1), (j + 1, i)]
            if any(bad[c] for c in corners):
                continue
            if xs[i] < 0 < xs[i + 1] and max(abs(ys[j]), abs(ys[j + 1])) >= om:
                # the cell boundary crosses a cut, so its winding number is meaningless
                continue
            vals = np.array([D[c] for c in corners])
            if np.any(vals == 0):
                start = lattice[corners[int(np.argmin(np.abs(vals)))]]
            elif _winding(vals) != 0:
                start = lattice[j, i] + 0.5 * ((xs[1] - xs[0]) + 1j * (ys[1] - ys[0]))
            else:
                continue
            root = _newton(start, wave, tol, max_iter)
            if root is None:
                continue
            inside = re_lo <= root.real <= re_hi and im_lo <= root.imag <= im_hi
            if inside and not _excluded(root, om, exclude) and all(abs(root - r) > 1e-8 for r in roots):
                roots.append(root)
    return sorted(roots, key=lambda z: (z.imag, z.real))


def _newton(z, wave, tol, max_iter):
    for _ in range(max_iter):
        if _excluded(z, wave.omega, 0.0) or (abs(z.real) < CUT_TOL and abs(z.imag) >= wave.omega):
            break
        d = determinant(z, wave)
        dd = determinant_derivative(z, wave)
        if dd == 0:
            break
        step = d / dd
        z = z - step
        if abs(step) <= 1e-15 * max(1.0, abs(z)):
            if abs(determinant(z, wave)) <= tol:
                return complex(z)
            break
    if abs(determinant(z, wave)) <= tol:
        return complex(z)
    warnings.warn(f"Newton did not converge from a lattice candidate near {z:.6g}", stacklevel=3)
    return None
