"""Relaxation instrumentation: potential solve, mixed entropy, decay fits."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .grid import GridSpec, VelocityProfile, centered_gradient
from .state import ConstantsLedger, SpeciesPair, moments_ujs, weighted_norm


def solve_discrete_poisson(u_h: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Mean-free potential phi with (Dc Dc phi)_i = -u_h[i] on the periodic grid.

    Dc Dc is the wide five-point stencil (phi_{i+2} - 2 phi_i + phi_{i-2}) /
    (4 dx^2); it is invertible on mean-free fields because nx is odd.  Solved
    through the dense bordered system that appends the zero-mean constraint
    with a Lagrange multiplier.
    """
    u = np.asarray(u_h, dtype=float)
    if u.shape != (grid.nx,):
        raise ValueError(f"expected shape ({grid.nx},), got {u.shape}")
    mean = grid.dx * float(np.sum(u))
    if abs(mean) > 1e-10 * max(1.0, float(np.max(np.abs(u)))):
        raise ValueError(
            f"source must be mean-free for solvability, got cell-sum {mean:.3e}"
        )
    n = grid.nx
    idx = np.arange(n)
    a = np.zeros((n + 1, n + 1))
    coef = 1.0 / (4.0 * grid.dx**2)
    a[idx, (idx + 2) % n] += coef
    a[idx, (idx - 2) % n] += coef
    a[idx, idx] -= 2.0 * coef
    a[:n, n] = 1.0
    a[n, :n] = grid.dx
    rhs = np.concatenate([-u, [0.0]])
    phi = scipy.linalg.solve(a, rhs)[:n]
    return phi


@dataclass(frozen=True)
class PotentialState:
    """Current potential and, once available, the one from the previous step."""

    phi: np.ndarray
    phi_prev: np.ndarray | None = None

    def advanced(self, phi_new: np.ndarray) -> "PotentialState":
        return PotentialState(phi_new, self.phi)


def modified_entropy(
    state: SpeciesPair,
    pot: PotentialState,
    dt: float,
    ledger: ConstantsLedger,
    chi1: VelocityProfile,
    chi2: VelocityProfile,
    grid: GridSpec,
    d0: float,
    delta: float | None = None,
) -> float:
    """Mixed Lyapunov functional certifying exponential relaxation.

    H = 1/2 ||F||^2 + delta <j_h, Dc phi> + delta/(2 dt) ||Dc phi - Dc phi_prev||^2,
    where j_h is the first velocity moment of f - g and phi solves the wide
    Poisson problem for the density difference.  Without a previous potential
    the last term is omitted (partial value, first record of a run).  delta
    defaults to the ledger's choice and must stay below the admissible
    ceiling min(delta1..3).
    """
    if delta is None:
        delta = ledger.delta
    ceiling = min(ledger.delta1, ledger.delta2, ledger.delta3)
    if not 0.0 < delta < ceiling:
        raise ValueError(
            f"delta must lie in (0, {ceiling:.6e}) for the estimate chain, got {delta}"
        )
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    _, j_h, _ = moments_ujs(state.f - state.g, grid, d0)
    dphi = centered_gradient(pot.phi, grid)
    h = 0.5 * weighted_norm(state, chi1, chi2, ledger.rho, grid) ** 2
    h += delta * grid.dx * float(np.sum(j_h * dphi))
    if pot.phi_prev is not None:
        incr = dphi - centered_gradient(pot.phi_prev, grid)
        h += delta / (2.0 * dt) * grid.dx * float(np.sum(incr**2))
    return h


@dataclass(frozen=True)
class DecayFit:
    """Least-squares exponential fit value ~ prefactor * exp(-kappa * t)."""

    kappa: float
    prefactor: float
    r_squared: float
    window: tuple[float, float]
    n_points: int


def fit_decay_rate(
    times: np.ndarray,
    values: np.ndarray,
    window: tuple[float, float] | None = None,
    floor: float = 1e-14,
) -> DecayFit:
    """Fit log(value) against time on a window clear of the rounding plateau.

    The default window starts at 20% of the horizon and ends at the first
    sample at or below 1e3*floor (where the series is about to drown in
    rounding noise).  Non-positive samples inside the window are an error;
    samples at or below the floor are excluded.  Needs at least 5 usable
    points.
    """
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.shape != v.shape or t.ndim != 1:
        raise ValueError(f"times and values must be matching 1-d arrays, got {t.shape}, {v.shape}")
    if t.size == 0:
        raise ValueError("empty series")
    if window is None:
        t_lo = t[0] + 0.2 * (t[-1] - t[0])
        below = np.nonzero(v <= 1e3 * floor)[0]
        t_hi = t[below[0]] if below.size else t[-1]
    else:
        t_lo, t_hi = window
    in_window = (t >= t_lo) & (t <= t_hi)
    if np.any(v[in_window] <= 0.0):
        raise ValueError("series has non-positive values inside the fit window")
    usable = in_window & (v > floor)
    if int(np.sum(usable)) < 5:
        raise ValueError(
            f"only {int(np.sum(usable))} usable points in window [{t_lo}, {t_hi}], need 5"
        )
    ts, logs = t[usable], np.log(v[usable])
    slope, intercept = np.polyfit(ts, logs, 1)
    fitted = slope * ts + intercept
    ss_res = float(np.sum((logs - fitted) ** 2))
    ss_tot = float(np.sum((logs - np.mean(logs)) ** 2))
    r_squared = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return DecayFit(
        kappa=-float(slope),
        prefactor=float(math.exp(intercept)),
        r_squared=r_squared,
        window=(float(t_lo), float(t_hi)),
        n_points=int(np.sum(usable)),
    )


@dataclass(frozen=True)
class TimeSeriesRecord:
    """One accepted step of a run, as written to the time-series file."""

    t: float
    weighted_norm: float
    rho_f_l2: float
    rho_g_l2: float
    entropy: float | None
    mass_difference: float
    bounds_pass: bool | None
    dt_used: float | None
    newton_iterations: int | None
