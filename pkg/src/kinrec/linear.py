"""Implicit transport-collision scheme linearized around the uniform steady state."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import (
    GridSpec,
    VelocityProfile,
    backward_gradient,
    centered_gradient,
    forward_gradient,
    second_difference,
)
from .state import SpeciesPair, collision_linear, moments_ujs

LAX_FRIEDRICHS = "lax-friedrichs"
CENTERED = "centered"
UPWIND = "upwind"


@dataclass(frozen=True)
class Flux:
    """Numerical flux for the periodic transport term.

    kind selects the interface formula; lam is the LF diffusion strength
    (interface jump penalty divided by dv), unused by the other kinds.  The
    LF interface value between cells i and i+1 at velocity v is
    dv*(v/2)*(h_i + h_{i+1}) - dv*lam*(h_{i+1} - h_i); the resulting cell
    update equals the centered one minus lam*dx times the second difference.
    Monotone iff lam >= v_star/2.
    """

    kind: str
    lam: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in (LAX_FRIEDRICHS, CENTERED, UPWIND):
            raise ValueError(f"unknown flux kind {self.kind!r}")
        if self.kind == LAX_FRIEDRICHS and self.lam <= 0.0:
            raise ValueError(f"lax_friedrichs flux needs lam > 0, got {self.lam}")
        if self.kind != LAX_FRIEDRICHS and self.lam != 0.0:
            raise ValueError(f"{self.kind} flux takes no lam, got {self.lam}")

    @staticmethod
    def lax_friedrichs(lam: float) -> "Flux":
        return Flux(LAX_FRIEDRICHS, float(lam))

    @staticmethod
    def centered() -> "Flux":
        return Flux(CENTERED)

    @staticmethod
    def upwind() -> "Flux":
        return Flux(UPWIND)


def flux_divergence(field: np.ndarray, flux: Flux, grid: GridSpec) -> np.ndarray:
    """Per-cell transport update (flux difference over cell area) of one species.

    field has shape (nx, 2*nv); velocity enters through the midpoint values.
    """
    v = grid.v_centers
    if flux.kind == CENTERED:
        return v * centered_gradient(field, grid)
    if flux.kind == LAX_FRIEDRICHS:
        return v * centered_gradient(field, grid) - flux.lam * grid.dx * second_difference(
            field, grid
        )
    vplus = np.maximum(v, 0.0)
    vminus = -np.minimum(v, 0.0)
    return vplus * backward_gradient(field, grid) - vminus * forward_gradient(field, grid)


def _shift_matrix(n: int, offset: int) -> sp.csr_matrix:
    """Periodic shift: (S u)_i = u_{i+offset}."""
    cols = (np.arange(n) + offset) % n
    return sp.csr_matrix((np.ones(n), (np.arange(n), cols)), shape=(n, n))


def transport_matrix(flux: Flux, grid: GridSpec) -> sp.csr_matrix:
    """Sparse transport operator on one species, spatial-major flattening.

    Row/column index is i * (2*nv) + m, so the matrix is a Kronecker product
    of a spatial difference stencil with a velocity-diagonal weight.
    """
    n, nvel = grid.nx, grid.n_vel
    splus = _shift_matrix(n, 1)
    sminus = _shift_matrix(n, -1)
    eye_x = sp.identity(n, format="csr")
    eye_v = sp.identity(nvel, format="csr")
    v = grid.v_centers
    vdiag = sp.diags(v)
    if flux.kind == CENTERED:
        cen = (splus - sminus) / (2.0 * grid.dx)
        return sp.kron(cen, vdiag, format="csr")
    if flux.kind == LAX_FRIEDRICHS:
        cen = (splus - sminus) / (2.0 * grid.dx)
        lap = (splus - 2.0 * eye_x + sminus) / grid.dx**2
        return (
            sp.kron(cen, vdiag) - flux.lam * grid.dx * sp.kron(lap, eye_v)
        ).tocsr()
    dplus = (splus - eye_x) / grid.dx
    dminus = (eye_x - sminus) / grid.dx
    return (
        sp.kron(dminus, sp.diags(np.maximum(v, 0.0)))
        - sp.kron(dplus, sp.diags(-np.minimum(v, 0.0)))
    ).tocsr()


def collision_matrix(
    chi1: VelocityProfile, chi2: VelocityProfile, rho: float, grid: GridSpec
) -> sp.csr_matrix:
    """Linearized collision operator on the stacked (f, g) vector."""
    n = grid.n_unknowns
    eye_x = sp.identity(grid.nx, format="csr")
    avg1 = grid.dv * np.outer(chi1.values, np.ones(grid.n_vel))
    avg2 = grid.dv * np.outer(chi2.values, np.ones(grid.n_vel))
    l_fg = -rho * sp.kron(eye_x, sp.csr_matrix(avg1))
    l_gf = -sp.kron(eye_x, sp.csr_matrix(avg2)) / rho
    l_ff = -sp.identity(n) / rho
    l_gg = -rho * sp.identity(n)
    return sp.bmat([[l_ff, l_fg], [l_gf, l_gg]], format="csr")


def stack_pair(state: SpeciesPair) -> np.ndarray:
    return np.concatenate([state.f.ravel(), state.g.ravel()])


def unstack_pair(x: np.ndarray, grid: GridSpec) -> SpeciesPair:
    n = grid.n_unknowns
    shape = (grid.nx, grid.n_vel)
    return SpeciesPair(x[:n].reshape(shape).copy(), x[n:].reshape(shape).copy())


class ImplicitLinearOperator:
    """Backward-Euler system matrix I + dt*(transport - collision), factorized once.

    solve advances one step; apply evaluates the matrix, giving tests a path
    independent of the stencil implementations.
    """

    def __init__(
        self,
        grid: GridSpec,
        chi1: VelocityProfile,
        chi2: VelocityProfile,
        rho: float,
        dt: float,
        flux: Flux,
    ) -> None:
        if dt <= 0.0:
            raise ValueError(f"dt must be positive, got {dt}")
        if rho <= 0.0:
            raise ValueError(f"rho must be positive, got {rho}")
        self.grid = grid
        self.chi1 = chi1
        self.chi2 = chi2
        self.rho = float(rho)
        self.dt = float(dt)
        self.flux = flux
        transport = transport_matrix(flux, grid)
        two_species = sp.block_diag([transport, transport], format="csr")
        matrix = (
            sp.identity(2 * grid.n_unknowns, format="csr")
            + dt * two_species
            - dt * collision_matrix(chi1, chi2, rho, grid)
        )
        self.matrix = matrix.tocsc()
        try:
            self._lu = spla.splu(self.matrix)
        except RuntimeError as exc:  # pragma: no cover - defensive
            raise RuntimeError(f"implicit operator is singular: {exc}") from exc

    def apply(self, state: SpeciesPair) -> SpeciesPair:
        return unstack_pair(self.matrix @ stack_pair(state), self.grid)

    def solve(self, rhs: SpeciesPair) -> SpeciesPair:
        return unstack_pair(self._lu.solve(stack_pair(rhs)), self.grid)


def assemble_linear_operator(
    grid: GridSpec,
    chi1: VelocityProfile,
    chi2: VelocityProfile,
    rho: float,
    dt: float,
    flux: Flux,
) -> ImplicitLinearOperator:
    return ImplicitLinearOperator(grid, chi1, chi2, rho, dt, flux)


def step_linear(state: SpeciesPair, op: ImplicitLinearOperator) -> SpeciesPair:
    """One backward-Euler step of the linearized system."""
    return op.solve(state)


def residual_linear(
    state_next: SpeciesPair,
    state_prev: SpeciesPair,
    dt: float,
    flux: Flux,
    chi1: VelocityProfile,
    chi2: VelocityProfile,
    rho: float,
    grid: GridSpec,
) -> SpeciesPair:
    """Pointwise defect of the implicit linear scheme, via the stencil path."""
    coll = collision_linear(state_next, rho, chi1, chi2, grid)
    rf = (
        (state_next.f - state_prev.f) / dt
        + flux_divergence(state_next.f, flux, grid)
        - coll.f
    )
    rg = (
        (state_next.g - state_prev.g) / dt
        + flux_divergence(state_next.g, flux, grid)
        - coll.g
    )
    return SpeciesPair(rf, rg)


def verify_moment_schemes(
    state_prev: SpeciesPair,
    state_next: SpeciesPair,
    grid: GridSpec,
    rho: float,
    d0: float,
    dt: float,
    lam: float,
) -> tuple[float, float]:
    """Max-norm defects of the density- and current-difference updates.

    Both vanish identically (up to rounding) when the two states are
    consecutive iterates of the implicit LF scheme with diffusion strength
    lam: the velocity averages of the kinetic update close exactly on
    (u, j, s) because the profiles carry unit mass and no first moment.
    """
    u_p, j_p, _ = moments_ujs(state_prev.f - state_prev.g, grid, d0)
    u_n, j_n, s_n = moments_ujs(state_next.f - state_next.g, grid, d0)
    _, jf_n, _ = moments_ujs(state_next.f, grid, d0)
    _, jg_n, _ = moments_ujs(state_next.g, grid, d0)

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
    )
    return float(np.max(np.abs(res_u))), float(np.max(np.abs(res_j)))


def transport_quadratic_form(
    state: SpeciesPair,
    flux: Flux,
    chi1: VelocityProfile,
    chi2: VelocityProfile,
    rho: float,
    grid: GridSpec,
) -> float:
    """Weighted inner product of the transport update with the state itself.

    Zero for the centered flux (skew transport), nonnegative for LF; the
    difference between the LF and centered forms is the explicit gradient
    dissipation returned by lax_friedrichs_dissipation.
    """
    from .state import weighted_inner

    div = SpeciesPair(
        flux_divergence(state.f, flux, grid), flux_divergence(state.g, flux, grid)
    )
    return weighted_inner(div, state, chi1, chi2, rho, grid)


def lax_friedrichs_dissipation(
    state: SpeciesPair,
    lam: float,
    chi1: VelocityProfile,
    chi2: VelocityProfile,
    rho: float,
    grid: GridSpec,
) -> float:
    """Gradient dissipation added by the LF interface penalty.

    Equals lam*dx times the weighted square norm of the one-sided spatial
    gradient, which is exactly the difference between the LF and centered
    transport quadratic forms (summation by parts turns the second-difference
    penalty into -||backward gradient||^2; the two one-sided gradients have
    equal norms on the periodic grid).
    """
    gf = backward_gradient(state.f, grid)
    gg = backward_gradient(state.g, grid)
    quad = float(
        np.sum(gf**2 / (rho * chi1.values) + gg**2 * (rho / chi2.values))
    )
    return lam * grid.dx * grid.dx * grid.dv * quad
