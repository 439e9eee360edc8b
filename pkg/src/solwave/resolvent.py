"""Explicit resolvent kernel of the linearized generator.

``R(lambda, x, y) = Gamma + P`` solves ``(C - lambda) R = delta(x - y) I`` on
real two-component fields (entries are complex because ``lambda`` is).  With
``v_pm = (1, +-i)`` and ``k_pm`` from :mod:`solwave.spectrum`, ``Gamma`` is the
part that vanishes at ``x = 0`` and ``P`` is separable in ``(x, y)``.

Fields are passed around as complex arrays ``chi_1 + i chi_2``; this module
converts them to explicit ``(chi_1, chi_2)`` pairs, since the kernel mixes
the components with complex coefficients.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import linops
from .model import DomainError, FieldState, Grid, SolwaveError
from .spectrum import BranchPoint, determinant, k_branch

DET_TOL = 1e-12
V_PLUS = np.array([1.0, 1j])
V_MINUS = np.array([1.0, -1j])


class SingularDeterminant(SolwaveError):
    """Raised when ``lambda`` is (numerically) an eigenvalue."""


@dataclass(frozen=True)
class KernelValue:
    lam: BranchPoint
    x: np.ndarray
    y: float
    matrix: np.ndarray  # shape x.shape + (2, 2)


@dataclass(frozen=True)
class _Constants:
    kp: complex
    km: complex
    alpha: float
    beta: float
    D: complex


def _constants(lam, wave):
    p = lam if isinstance(lam, BranchPoint) else BranchPoint(lam)
    D = determinant(p, wave)
    if abs(D) <= DET_TOL:
        raise SingularDeterminant(f"D({p.lam}) = {D:.3e}: lambda is in the discrete spectrum")
    kp = k_branch(p, wave.omega, "plus")
    km = k_branch(p, wave.omega, "minus")
    return p, _Constants(kp, km, wave.alpha, wave.beta, D)


def _columns(c, x, y):
    """Columns ``(R_I, R_II)`` as arrays of shape ``x.shape + (2,)``."""
    x = np.asarray(x, dtype=float)
    ax, ay, axy = np.abs(x), abs(y), np.abs(x - y)
    kp, km, al, be, D = c.kp, c.km, c.alpha, c.beta, c.D
    Ep = np.exp(1j * kp * axy) - np.exp(1j * kp * (ax + ay))
    Em = np.exp(1j * km * axy) - np.exp(1j * km * (ax + ay))
    epp = np.exp(1j * kp * (ax + ay))
    emm = np.exp(1j * km * (ax + ay))
    epm = np.exp(1j * (kp * ax + km * ay))
    emp = np.exp(1j * (km * ax + kp * ay))
    vp, vm = V_PLUS, V_MINUS
    gI = (Ep / (4 * kp))[..., None] * vp - (Em / (4 * km))[..., None] * vm
    pI = (((1j * al - 2 * km) * epp + 1j * be * epm)[..., None] * vp
          - (1j * be * emp + (1j * al - 2 * kp) * emm)[..., None] * vm) / (2 * D)
    gII = -(1j * Ep / (4 * kp))[..., None] * vp - (1j * Em / (4 * km))[..., None] * vm
    pII = 1j / (2 * D) * ((-(1j * al - 2 * km) * epp + 1j * be * epm)[..., None] * vp
                          + (1j * be * emp - (1j * al - 2 * kp) * emm)[..., None] * vm)
    return gI + pI, gII + pII


def _columns_dx(c, x, y, sx, sxy):
    """``d/dx`` of both columns; ``sx``, ``sxy`` are the signs of ``x`` and ``x - y``."""
    ax, ay, axy = abs(x), abs(y), abs(x - y)
    kp, km, al, be, D = c.kp, c.km, c.alpha, c.beta, c.D
    dEp = 1j * kp * (sxy * np.exp(1j * kp * axy) - sx * np.exp(1j * kp * (ax + ay)))
    dEm = 1j * km * (sxy * np.exp(1j * km * axy) - sx * np.exp(1j * km * (ax + ay)))
    depp = 1j * kp * sx * np.exp(1j * kp * (ax + ay))
    demm = 1j * km * sx * np.exp(1j * km * (ax + ay))
    depm = 1j * kp * sx * np.exp(1j * (kp * ax + km * ay))
    demp = 1j * km * sx * np.exp(1j * (km * ax + kp * ay))
    vp, vm = V_PLUS, V_MINUS
    dI = (dEp / (4 * kp)) * vp - (dEm / (4 * km)) * vm \
        + (((1j * al - 2 * km) * depp + 1j * be * depm) * vp
           - (1j * be * demp + (1j * al - 2 * kp) * demm) * vm) / (2 * D)
    dII = -(1j * dEp / (4 * kp)) * vp - (1j * dEm / (4 * km)) * vm \
        + 1j / (2 * D) * ((-(1j * al - 2 * km) * depp + 1j * be * depm) * vp
                          + (1j * be * demp - (1j * al - 2 * kp) * demm) * vm)
    return dI, dII


def kernel(lam, x, y, wave):
    """``R(lambda, x, y)``; ``x`` may be an array, ``matrix[..., :, j]`` is column ``j``."""
    p, c = _constants(lam, wave)
    cI, cII = _columns(c, x, float(y))
    return KernelValue(p, np.asarray(x, dtype=float), float(y), np.stack([cI, cII], axis=-1))


def jump_residuals(lam, y, wave):
    """Residuals of the two derivative jump conditions, from the exact formulas.

    At ``x = y`` the jumps must be ``(0, -1)`` and ``(1, 0)`` for the two
    columns; at ``x = 0`` they must equal ``-M R(0, y)`` with
    ``M = diag(a + b, a)``.
    """
    y = float(y)
    if y == 0.0:
        raise DomainError("jump conditions need y != 0")
    _, c = _constants(lam, wave)
    sy = math.copysign(1.0, y)
    up_I, up_II = _columns_dx(c, y, y, sy, 1.0)
    dn_I, dn_II = _columns_dx(c, y, y, sy, -1.0)
    r_xy = max(np.max(np.abs(up_I - dn_I - np.array([0.0, -1.0]))),
               np.max(np.abs(up_II - dn_II - np.array([1.0, 0.0]))))
    p_I, p_II = _columns_dx(c, 0.0, y, 1.0, -sy)
    m_I, m_II = _columns_dx(c, 0.0, y, -1.0, -sy)
    R0_I, R0_II = _columns(c, 0.0, y)
    M = np.diag([wave.a + wave.b, wave.a])
    r_x0 = max(np.max(np.abs(p_I - m_I + M @ R0_I)), np.max(np.abs(p_II - m_II + M @ R0_II)))
    return float(r_xy), float(r_x0)


def _interior_residual(lam, y, grid, wave):
    p, c = _constants(lam, wave)
    x = grid.x
    h = grid.h
    iy = int(round((y - x[0]) / h))
    if abs(x[iy] - y) > 1e-9 * max(1.0, abs(y)):
        raise DomainError(f"y = {y} is not a grid node")
    cols = _columns(c, x, y)
    lamv = p.lam
    om = wave.omega
    worst = 0.0
    scale = 0.0
    mask = np.ones(grid.n, bool)
    for k in (grid.origin, iy):
        mask[max(k - 1, 0): k + 2] = False
    mask[0] = mask[-1] = False
    for R in cols:
        R1, R2 = R[:, 0], R[:, 1]
        L1 = np.zeros_like(R1)
        L2 = np.zeros_like(R2)
        L1[1:-1] = -(R1[2:] - 2 * R1[1:-1] + R1[:-2]) / h ** 2 + om * R1[1:-1]
        L2[1:-1] = -(R2[2:] - 2 * R2[1:-1] + R2[:-2]) / h ** 2 + om * R2[1:-1]
        # (C - lambda) R = (L R_2 - lambda R_1, -L R_1 - lambda R_2) away from 0 and y
        res1 = L2 - lamv * R1
        res2 = -L1 - lamv * R2
        worst = max(worst, float(np.max(np.abs(res1[mask]))), float(np.max(np.abs(res2[mask]))))
        scale = max(scale, float(np.max(np.abs(R))))
    return worst, scale


@dataclass(frozen=True)
class KernelReport:
    interior_residual: float
    interior_residual_fine: float
    order: float
    max_kernel: float
    h: float
    jump_xy: float
    jump_x0: float

    def to_dict(self):
        return {"interior_residual": self.interior_residual, "order": self.order,
                "jump_xy": self.jump_xy, "jump_x0": self.jump_x0,
                "interior_residual_fine": self.interior_residual_fine, "h": self.h,
                "max_kernel": self.max_kernel}


def verify_kernel(lam, y, grid, wave):
    """Finite-difference residual of ``(C - lambda) R`` on ``grid`` and on the halved grid."""
    if y == 0.0:
        raise DomainError("y must be a nonzero grid node")
    res, scale = _interior_residual(lam, y, grid, wave)
    fine = Grid(grid.L, 2 * grid.n - 1)
    res_f, _ = _interior_residual(lam, y, fine, wave)
    order = math.log2(res / res_f) if res_f > 0 else math.inf
    jxy, jx0 = jump_residuals(lam, y, wave)
    return KernelReport(res, res_f, order, scale, grid.h, jxy, jx0)


# ---------------------------------------------------------------------------
# Riesz projector

def _pair(field):
    return np.stack([field.values.real, field.values.imag], axis=-1).astype(complex)


def _apply_separable(c, grid, psi_pair, exp_tails):
    """``int P(lambda, x, y) psi(y) dy`` for all grid ``x``, in ``O(n)``."""
    x = grid.x
    ax = np.abs(x)
    ep_y = np.exp(1j * c.kp * ax)
    em_y = np.exp(1j * c.km * ax)
    p1, p2 = psi_pair[:, 0], psi_pair[:, 1]
    # right factor rows applied to psi, integrated in y
    s_plus = linops.integrate(ep_y * (p1 - 1j * p2), grid, exp_tails)
    s_minus = linops.integrate(em_y * (p1 + 1j * p2), grid, exp_tails)
    al, be, kp, km = c.alpha, c.beta, c.kp, c.km
    mid = np.array([[1j * al - 2 * km, 1j * be], [-1j * be, -1j * al + 2 * kp]])
    coef = mid @ np.array([s_plus, s_minus]) / (2 * c.D)
    return coef[0] * ep_y[:, None] * V_PLUS + coef[1] * em_y[:, None] * V_MINUS


def _apply_gamma(c, grid, psi_pair):
    """``int Gamma(lambda, x, y) psi(y) dy`` by the full ``O(n^2)`` quadrature."""
    x = grid.x
    out = np.zeros((grid.n, 2), complex)
    for j, y in enumerate(x):
        w = grid.h * (0.5 if j in (0, grid.n - 1) else 1.0)
        ax, ay, axy = np.abs(x), abs(y), np.abs(x - y)
        Ep = np.exp(1j * c.kp * axy) - np.exp(1j * c.kp * (ax + ay))
        Em = np.exp(1j * c.km * axy) - np.exp(1j * c.km * (ax + ay))
        colI = (Ep / (4 * c.kp))[:, None] * V_PLUS - (Em / (4 * c.km))[:, None] * V_MINUS
        colII = -(1j * Ep / (4 * c.kp))[:, None] * V_PLUS - (1j * Em / (4 * c.km))[:, None] * V_MINUS
        out += w * (colI * psi_pair[j, 0] + colII * psi_pair[j, 1])
    return out


def _contour(wave, psi_pair, grid, r, n_nodes, exp_tails, include_gamma):
    theta = 2 * np.pi * (np.arange(n_nodes) + 0.5) / n_nodes
    total = np.zeros((grid.n, 2), complex)
    for th in theta:
        lam = r * np.exp(1j * th)
        _, c = _constants(lam, wave)
        val = _apply_separable(c, grid, psi_pair, exp_tails)
        if include_gamma:
            val = val + _apply_gamma(c, grid, psi_pair)
        total += lam * val
    # -(1/2 pi i) oint f dlambda with dlambda = i lambda dtheta
    return -total / n_nodes


def riesz_p0_contour(wave, psi, r=None, n_nodes=256, exp_tails=False, include_gamma=False,
                     check=True):
    """``-(1/2 pi i) oint_{|lambda|=r} R(lambda) psi dlambda`` by the trapezoidal rule.

    The ``Gamma`` part is analytic inside the circle and integrates to zero,
    so only the separable part is evaluated unless ``include_gamma`` is set
    (an ``O(n^2)`` cross-check for small grids).
    """
    om = wave.omega
    r = 0.5 * om if r is None else float(r)
    if not 0 < r < om:
        raise DomainError(f"contour radius must lie in (0, omega = {om}), got {r}")
    if n_nodes < 64:
        raise DomainError("at least 64 contour nodes are required")
    grid = psi.grid
    pair = _pair(psi)
    out = _contour(wave, pair, grid, r, n_nodes, exp_tails, include_gamma)
    if check:
        out2 = _contour(wave, pair, grid, r, 2 * n_nodes, exp_tails, include_gamma)
        if np.max(np.abs(out2 - out)) > 1e-8:
            warnings.warn("contour quadrature not converged: doubling the nodes changes the result "
                          f"by {np.max(np.abs(out2 - out)):.1e}", stacklevel=2)
    imag = np.max(np.abs(out.imag))
    if imag > 1e-6 * max(1.0, np.max(np.abs(out.real))):
        warnings.warn(f"contour projection has an imaginary part {imag:.1e}", stacklevel=2)
    return FieldState(grid, out[:, 0].real + 1j * out[:, 1].real)
