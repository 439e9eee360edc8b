"""Weighted norms, power-law fits and conservation summaries."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import linops
from .model import DomainError, SolwaveError


class NonPositiveValues(SolwaveError, ValueError):
    pass


def weighted_norm(psi, p, beta, point_mass=0.0):
    """``|(1 + |x|)^beta psi|_{L^p}`` for ``p`` in ``{1, 2, 'inf'}``.

    ``point_mass`` adds ``|C|`` for a field ``psi + C delta(x)`` (the weight is
    one at the origin).  A warning is issued when the weighted integrand is
    not small at the ends of the grid, since the integral is then truncated.
    """
    grid = psi.grid
    w = (1.0 + np.abs(grid.x)) ** beta * np.abs(psi.values)
    peak = float(np.max(w)) if w.size else 0.0
    if p in ("inf", np.inf, math.inf):
        return peak + abs(point_mass)
    if p not in (1, 2):
        raise DomainError(f"p must be 1, 2 or 'inf', got {p!r}")
    if peak > 0 and max(w[0], w[-1]) > 1e-8 * peak:
        warnings.warn("weighted integrand is not negligible at the grid ends; "
                      "the norm may diverge", stacklevel=2)
    f = w if p == 1 else w * w
    total = float(linops.integrate(f, grid))
    val = total if p == 1 else math.sqrt(max(total, 0.0))
    return val + abs(point_mass)


@dataclass(frozen=True)
class DecayFit:
    exponent: float
    stderr: float
    window: tuple
    n_points: int
    r_squared: float
    intercept: float = 0.0


def decay_exponent(times, values, window=None):
    """Least-squares slope of ``log(values)`` against ``log(t)`` over ``window``."""
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if window is None:
        window = (5.0, min(50.0, float(t.max())))
    lo, hi = window
    if not lo < hi:
        raise DomainError(f"empty fit window {window}")
    sel = (t >= lo - 1e-12) & (t <= hi + 1e-12)
    if np.count_nonzero(sel) < 8:
        raise DomainError(f"only {np.count_nonzero(sel)} samples in the fit window; need 8")
    if np.any(t[sel] <= 0):
        raise DomainError("fit window must lie in t > 0")
    if np.any(v[sel] <= 0) or not np.all(np.isfinite(v[sel])):
        raise NonPositiveValues("values must be positive and finite on the fit window")
    fit = stats.linregress(np.log(t[sel]), np.log(v[sel]))
    return DecayFit(float(fit.slope), float(fit.stderr), (float(lo), float(hi)),
                    int(np.count_nonzero(sel)), float(fit.rvalue ** 2), float(fit.intercept))


def log_uniform_times(lo, hi, n, dt):
    """About ``n`` log-spaced times in ``[lo, hi]`` rounded to multiples of ``dt``."""
    raw = np.geomspace(lo, hi, n)
    return sorted({round(round(t / dt) * dt, 12) for t in raw})


@dataclass(frozen=True)
class ConservationReport:
    charge_drift_rel: float
    energy_drift_rel: float
    times: np.ndarray
    charge: np.ndarray
    energy: np.ndarray

    def to_dict(self):
        return {"charge_drift_rel": self.charge_drift_rel,
                "energy_drift_rel": self.energy_drift_rel,
                "times": [float(t) for t in self.times]}


def conservation_report(trajectory):
    """Largest relative change of charge and energy against the first snapshot."""
    q = np.asarray(trajectory.charge, dtype=float)
    e = np.asarray(trajectory.energy, dtype=float)
    if q.size < 2:
        raise DomainError("need at least two snapshots")
    dq = float(np.max(np.abs(q - q[0])) / abs(q[0])) if q[0] else float(np.max(np.abs(q)))
    de = float(np.max(np.abs(e - e[0])) / abs(e[0])) if e[0] else float(np.max(np.abs(e)))
    return ConservationReport(dq, de, trajectory.snapshot_times, q, e)
