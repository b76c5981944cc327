"""Implicit scheme for the full generation-recombination system, solved by Newton."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import GridSpec, VelocityProfile, centered_gradient, second_difference
from .linear import Flux, flux_divergence, stack_pair, transport_matrix, unstack_pair
from .state import EquilibriumData, SpeciesPair, mass_difference, moments_ujs


class NewtonDivergedError(RuntimeError):
    """Newton failed to deliver an acceptable state; the caller may shrink dt."""


class StepFailedError(RuntimeError):
    """Adaptive stepping reached dt_min without producing an acceptable state."""


@dataclass(frozen=True)
class NewtonConfig:
    tol_residual: float = 1e-11
    max_iterations: int = 25
    # Relative per-step tolerance on the conserved mass difference; inf
    # disables the check (centered flux carries no conservation guarantee).
    mass_diff_drift_tol: float = 1e-10

    def __post_init__(self) -> None:
        if self.tol_residual <= 0.0:
            raise ValueError(f"tol_residual must be positive, got {self.tol_residual}")
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if self.mass_diff_drift_tol <= 0.0:
            raise ValueError(
                f"mass_diff_drift_tol must be positive, got {self.mass_diff_drift_tol}"
            )


@dataclass(frozen=True)
class AdaptiveController:
    """Time-step state for the nonlinear march.

    dt is the next step to attempt; growth applies after an accept that took
    at most accept_iteration_budget Newton iterations, shrink after a reject.
    """

    dt: float
    dt_min: float = 1e-8
    dt_max: float = 0.3
    growth: float = 2.0
    shrink: float = 0.5
    accept_iteration_budget: int = 8

    def __post_init__(self) -> None:
        if not 0.0 < self.dt_min <= self.dt <= self.dt_max:
            raise ValueError(
                f"need 0 < dt_min <= dt <= dt_max, got "
                f"{self.dt_min}, {self.dt}, {self.dt_max}"
            )
        if self.growth <= 1.0:
            raise ValueError(f"growth must exceed 1, got {self.growth}")
        if not 0.0 < self.shrink < 1.0:
            raise ValueError(f"shrink must lie in (0, 1), got {self.shrink}")
        if self.accept_iteration_budget < 0:
            raise ValueError(
                f"accept_iteration_budget must be >= 0, got {self.accept_iteration_budget}"
            )


@dataclass(frozen=True)
class BoundsEnvelope:
    """Two-sided control band around the uniform steady state.

    Species one is confined to [(rho-gamma1)*chi1, (rho+gamma2)*chi1] and
    species two to the reciprocal band [chi2/(rho+gamma2), chi2/(rho-gamma1)].
    A monotone flux (LF with lam >= v_star/2, or upwind) propagates the band.
    """

    gamma1: float
    gamma2: float

    def __post_init__(self) -> None:
        if self.gamma1 <= 0.0 or self.gamma2 <= 0.0:
            raise ValueError(f"gammas must be positive, got {self.gamma1}, {self.gamma2}")

    def levels(self, rho: float) -> tuple[float, float, float, float]:
        """(f_low, f_high, g_low, g_high) multipliers of the two profiles."""
        if self.gamma1 >= rho:
            raise ValueError(f"gamma1={self.gamma1} must stay below rho={rho}")
        return (
            rho - self.gamma1,
            rho + self.gamma2,
            1.0 / (rho + self.gamma2),
            1.0 / (rho - self.gamma1),
        )


def truncate_state(
    state: SpeciesPair,
    envelope: BoundsEnvelope,
    rho: float,
    chi1: VelocityProfile,
    chi2: VelocityProfile,
) -> SpeciesPair:
    """Clamp both species into the envelope, cell by cell."""
    f_lo, f_hi, g_lo, g_hi = envelope.levels(rho)
    return SpeciesPair(
        np.clip(state.f, f_lo * chi1.values, f_hi * chi1.values),
        np.clip(state.g, g_lo * chi2.values, g_hi * chi2.values),
    )


@dataclass(frozen=True)
class BoundsReport:
    """Extreme profile-relative levels of a state against an envelope."""

    f_ratio_min: float
    f_ratio_max: float
    g_ratio_min: float
    g_ratio_max: float
    passed: bool


def check_maximum_principle(
    state: SpeciesPair,
    envelope: BoundsEnvelope,
    rho: float,
    chi1: VelocityProfile,
    chi2: VelocityProfile,
    rtol: float = 1e-11,
) -> BoundsReport:
    f_lo, f_hi, g_lo, g_hi = envelope.levels(rho)
    rf = state.f / chi1.values
    rg = state.g / chi2.values
    f_min, f_max = float(rf.min()), float(rf.max())
    g_min, g_max = float(rg.min()), float(rg.max())
    slack_f = rtol * max(1.0, abs(f_lo), abs(f_hi))
    slack_g = rtol * max(1.0, abs(g_lo), abs(g_hi))
    passed = (
        f_min >= f_lo - slack_f
        and f_max <= f_hi + slack_f
        and g_min >= g_lo - slack_g
        and g_max <= g_hi + slack_g
    )
    return BoundsReport(f_min, f_max, g_min, g_max, passed)


def _collision_terms(
    state: SpeciesPair,
    chi1: VelocityProfile,
    chi2: VelocityProfile,
    grid: GridSpec,
    envelope: BoundsEnvelope | None,
    rho: float | None,
) -> tuple[np.ndarray, np.ndarray, SpeciesPair]:
    """Densities entering the collision term and the (possibly clamped) state."""
    if envelope is None:
        eff = state
    else:
        if rho is None:
            raise ValueError("truncated collision needs the equilibrium rho")
        eff = truncate_state(state, envelope, rho, chi1, chi2)
    rho_f = grid.dv * eff.f.sum(axis=1)
    rho_g = grid.dv * eff.g.sum(axis=1)
    return rho_f, rho_g, eff


def residual_nonlinear(
    state_next: SpeciesPair,
    state_prev: SpeciesPair,
    dt: float,
    flux: Flux,
    chi1: VelocityProfile,
    chi2: VelocityProfile,
    grid: GridSpec,
    envelope: BoundsEnvelope | None = None,
    rho: float | None = None,
) -> SpeciesPair:
    """Pointwise defect of the backward-Euler step of

        d/dt f + v d/dx f = chi1 - rho_g f,
        d/dt g + v d/dx g = chi2 - rho_f g,

    all reaction terms evaluated at the new state.  With an envelope, the
    reaction uses the clamped state (truncated scheme); transport and the
    time increment always use the raw one.
    """
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    rho_f, rho_g, eff = _collision_terms(state_next, chi1, chi2, grid, envelope, rho)
    rf = (
        (state_next.f - state_prev.f) / dt
        + flux_divergence(state_next.f, flux, grid)
        - (chi1.values - rho_g[:, None] * eff.f)
    )
    rg = (
        (state_next.g - state_prev.g) / dt
        + flux_divergence(state_next.g, flux, grid)
        - (chi2.values - rho_f[:, None] * eff.g)
    )
    return SpeciesPair(rf, rg)


class NonlinearStepper:
    """Newton driver with a fixed grid, flux, and profile pair.

    Holds the constant transport stencil and the sparsity template of the
    reaction coupling so that per-iteration work is data filling, one
    factorization, and one solve.
    """

    def __init__(
        self,
        grid: GridSpec,
        chi1: VelocityProfile,
        chi2: VelocityProfile,
        flux: Flux,
        envelope: BoundsEnvelope | None = None,
        rho: float | None = None,
    ) -> None:
        self.grid = grid
        self.chi1 = chi1
        self.chi2 = chi2
        self.flux = flux
        self.envelope = envelope
        self.rho = rho
        n = grid.n_unknowns
        self._n = n
        transport = transport_matrix(flux, grid).tocoo()
        rows = [transport.row, transport.row + n]
        cols = [transport.col, transport.col + n]
        self._transport_data = np.concatenate([transport.data, transport.data])
        # Dense (2nv x 2nv) reaction blocks at each site, f-rows vs g-columns
        # and vice versa.
        nvel = grid.n_vel
        site = np.arange(grid.nx)[:, None, None] * nvel
        shape = (grid.nx, nvel, nvel)
        tiled_rows = np.broadcast_to(site + np.arange(nvel)[None, :, None], shape).ravel()
        tiled_cols = np.broadcast_to(site + np.arange(nvel)[None, None, :], shape).ravel()
        rows += [tiled_rows, tiled_rows + n]       # f-block rows, g-block rows
        cols += [tiled_cols + n, tiled_cols]       # d/d g,        d/d f
        diag = np.arange(2 * n)
        rows.append(diag)
        cols.append(diag)
        self._rows = np.concatenate(rows)
        self._cols = np.concatenate(cols)

    def residual(self, state_next: SpeciesPair, state_prev: SpeciesPair, dt: float) -> SpeciesPair:
        return residual_nonlinear(
            state_next,
            state_prev,
            dt,
            self.flux,
            self.chi1,
            self.chi2,
            self.grid,
            self.envelope,
            self.rho,
        )

    def jacobian(self, state: SpeciesPair, dt: float) -> sp.csc_matrix:
        """Exact derivative of the residual at the candidate new state.

        The reaction part carries the bilinear density coupling: the
        derivative of rho_g[i]*f[i, m] in g[i, m'] is dv*f[i, m], plus the
        diagonal rho_g[i].  With an envelope, cells clamped by the truncation
        contribute zero derivative through the clamp.
        """
        grid = self.grid
        rho_f, rho_g, eff = _collision_terms(
            state, self.chi1, self.chi2, grid, self.envelope, self.rho
        )
        if self.envelope is None:
            mask_f = mask_g = None
        else:
            f_lo, f_hi, g_lo, g_hi = self.envelope.levels(self.rho)
            mask_f = (
                (state.f > f_lo * self.chi1.values) & (state.f < f_hi * self.chi1.values)
            ).astype(float)
            mask_g = (
                (state.g > g_lo * self.chi2.values) & (state.g < g_hi * self.chi2.values)
            ).astype(float)

        nvel = grid.n_vel
        dv = grid.dv
        # d(residual_f)/dg: dv * f_eff[i,m] spread over the velocity row,
        # masked where g is clamped; symmetrically for d(residual_g)/df.
        dfg = np.broadcast_to(dv * eff.f[:, :, None], (grid.nx, nvel, nvel))
        dgf = np.broadcast_to(dv * eff.g[:, :, None], (grid.nx, nvel, nvel))
        if mask_g is not None:
            dfg = dfg * mask_g[:, None, :]
            dgf = dgf * mask_f[:, None, :]
        react_f = np.repeat(rho_g, nvel)
        react_g = np.repeat(rho_f, nvel)
        if mask_f is not None:
            react_f = react_f * mask_f.ravel()
            react_g = react_g * mask_g.ravel()
        diag_f = 1.0 / dt + react_f
        diag_g = 1.0 / dt + react_g
        data = np.concatenate(
            [
                self._transport_data,
                dfg.ravel(),
                dgf.ravel(),
                diag_f,
                diag_g,
            ]
        )
        n2 = 2 * self._n
        return sp.coo_matrix((data, (self._rows, self._cols)), shape=(n2, n2)).tocsc()

    def newton(
        self, state_prev: SpeciesPair, dt: float, cfg: NewtonConfig
    ) -> tuple[SpeciesPair, int]:
        """Solve the implicit step; returns the new state and iteration count.

        Starts from the previous state.  Raises NewtonDivergedError when the
        iteration budget is exhausted or, for finite drift tolerance, when
        the converged state moved the conserved mass difference too far.
        """
        state = state_prev.copy()
        res = self.residual(state, state_prev, dt)
        res_norm = max(np.max(np.abs(res.f)), np.max(np.abs(res.g)))
        iterations = 0
        while res_norm > cfg.tol_residual:
            if iterations >= cfg.max_iterations:
                raise NewtonDivergedError(
                    f"residual {res_norm:.3e} after {iterations} iterations "
                    f"(tol {cfg.tol_residual:.3e}, dt {dt:.3e})"
                )
            jac = self.jacobian(state, dt)
            try:
                delta = spla.splu(jac).solve(-stack_pair(res))
            except RuntimeError as exc:
                raise RuntimeError(f"Newton linear solve failed: {exc}") from exc
            if not np.all(np.isfinite(delta)):
                raise NewtonDivergedError(f"non-finite Newton update at dt {dt:.3e}")
            state = state + unstack_pair(delta, self.grid)
            res = self.residual(state, state_prev, dt)
            res_norm = max(np.max(np.abs(res.f)), np.max(np.abs(res.g)))
            if not math.isfinite(res_norm):
                raise NewtonDivergedError(f"non-finite residual at dt {dt:.3e}")
            iterations += 1
        if math.isfinite(cfg.mass_diff_drift_tol):
            m_prev = mass_difference(state_prev, self.grid)
            drift = abs(mass_difference(state, self.grid) - m_prev)
            if drift > cfg.mass_diff_drift_tol * (1.0 + abs(m_prev)):
                raise NewtonDivergedError(
                    f"mass-difference drift {drift:.3e} exceeds tolerance at dt {dt:.3e}"
                )
        return state, iterations


def verify_moment_schemes_nonlinear(
    state_prev: SpeciesPair,
    state_next: SpeciesPair,
    equilibrium: EquilibriumData,
    grid: GridSpec,
    dt: float,
    lam: float,
) -> tuple[float, float]:
    """Max-norm defects of the deviation density- and current-difference updates.

    Velocity-averaging one implicit LF step of the full system closes exactly
    on the moments of the deviation from equilibrium: the density-difference
    update is conservative, and the current-difference update picks up the
    linearized damping plus a bilinear correction weighted by the new
    densities' distance to their steady levels.  Both defects vanish up to
    the Newton residual left in the step.
    """
    rho = equilibrium.rho
    d0 = equilibrium.d0
    dev_prev = state_prev - equilibrium.state
    dev_next = state_next - equilibrium.state
    u_p, j_p, _ = moments_ujs(dev_prev.f - dev_prev.g, grid, d0)
    u_n, j_n, s_n = moments_ujs(dev_next.f - dev_next.g, grid, d0)
    _, jf_n, _ = moments_ujs(dev_next.f, grid, d0)
    _, jg_n, _ = moments_ujs(dev_next.g, grid, d0)
    rho_f = grid.dv * state_next.f.sum(axis=1)
    rho_g = grid.dv * state_next.g.sum(axis=1)

    res_u = (
        (u_n - u_p) / dt
        + centered_gradient(j_n, grid)
        - lam * grid.dx * second_difference(u_n, grid)
    )
    res_j = (
        (j_n - j_p) / dt
        + centered_gradient(s_n, grid)
        + d0 * centered_gradient(u_n, grid)
        - lam * grid.dx * second_difference(j_n, grid)
        + (jf_n / rho - rho * jg_n)
        + ((rho_g - 1.0 / rho) * jf_n - (rho_f - rho) * jg_n)
    )
    return float(np.max(np.abs(res_u))), float(np.max(np.abs(res_j)))


@dataclass(frozen=True)
class StepResult:
    state: SpeciesPair
    dt_used: float
    controller: AdaptiveController
    newton_iterations: int


def adaptive_advance(
    state_prev: SpeciesPair,
    controller: AdaptiveController,
    cfg: NewtonConfig,
    stepper: NonlinearStepper,
) -> StepResult:
    """Advance one accepted step, shrinking dt on Newton failure.

    The accepted step grows the next dt only when Newton stayed within the
    controller's iteration budget; a rejection halves (by shrink) down to
    dt_min, below which StepFailedError propagates the last failure.
    """
    dt = controller.dt
    while True:
        try:
            state, iterations = stepper.newton(state_prev, dt, cfg)
        except NewtonDivergedError as exc:
            if dt <= controller.dt_min * (1.0 + 1e-12):
                raise StepFailedError(
                    f"no acceptable step above dt_min={controller.dt_min}: {exc}"
                ) from exc
            dt = max(dt * controller.shrink, controller.dt_min)
            continue
        if iterations <= controller.accept_iteration_budget:
            next_dt = min(dt * controller.growth, controller.dt_max)
        else:
            next_dt = dt
        return StepResult(state, dt, replace(controller, dt=next_dt), iterations)


def jacobian_nonlinear(
    state: SpeciesPair,
    dt: float,
    flux: Flux,
    chi1: VelocityProfile,
    chi2: VelocityProfile,
    grid: GridSpec,
    envelope: BoundsEnvelope | None = None,
    rho: float | None = None,
) -> sp.csc_matrix:
    return NonlinearStepper(grid, chi1, chi2, flux, envelope, rho).jacobian(state, dt)


def newton_solve(
    state_prev: SpeciesPair,
    dt: float,
    flux: Flux,
    cfg: NewtonConfig,
    chi1: VelocityProfile,
    chi2: VelocityProfile,
    grid: GridSpec,
    envelope: BoundsEnvelope | None = None,
    rho: float | None = None,
) -> tuple[SpeciesPair, int]:
    return NonlinearStepper(grid, chi1, chi2, flux, envelope, rho).newton(
        state_prev, dt, cfg
    )
