"""Two-species states, equilibrium data, weighted geometry, and estimate constants."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import GridSpec, VelocityProfile, poincare_constant


@dataclass(frozen=True)
class SpeciesPair:
    """Pair of phase-space fields, one per species, each of shape (nx, 2*nv)."""

    f: np.ndarray
    g: np.ndarray

    def __post_init__(self) -> None:
        if self.f.shape != self.g.shape:
            raise ValueError(f"species shapes differ: {self.f.shape} vs {self.g.shape}")

    def __add__(self, other: "SpeciesPair") -> "SpeciesPair":
        return SpeciesPair(self.f + other.f, self.g + other.g)

    def __sub__(self, other: "SpeciesPair") -> "SpeciesPair":
        return SpeciesPair(self.f - other.f, self.g - other.g)

    def __rmul__(self, a: float) -> "SpeciesPair":
        return SpeciesPair(a * self.f, a * self.g)

    def copy(self) -> "SpeciesPair":
        return SpeciesPair(self.f.copy(), self.g.copy())


def zero_pair(grid: GridSpec) -> SpeciesPair:
    shape = (grid.nx, grid.n_vel)
    return SpeciesPair(np.zeros(shape), np.zeros(shape))


def mass_difference(state: SpeciesPair, grid: GridSpec) -> float:
    """Net phase-space mass of species one minus species two.

    Conserved exactly by both evolution schemes with any conservative flux.
    """
    return grid.dx * grid.dv * float(np.sum(state.f) - np.sum(state.g))


def equilibrium_rho(mass_diff: float, torus_length: float) -> float:
    """Positive root of torus_length * (rho - 1/rho) = mass_diff.

    This is the spatial density level of species one in the steady state
    compatible with the conserved mass difference; species two sits at 1/rho.
    """
    if torus_length <= 0.0:
        raise ValueError(f"torus_length must be positive, got {torus_length}")
    rho = (mass_diff + math.hypot(mass_diff, 2.0 * torus_length)) / (2.0 * torus_length)
    if rho <= 0.0:
        raise ValueError(f"equilibrium density came out non-positive: {rho}")
    return rho


def equilibrium_rho_from_state(state: SpeciesPair, grid: GridSpec) -> float:
    return equilibrium_rho(mass_difference(state, grid), grid.torus_length)


@dataclass(frozen=True)
class EquilibriumData:
    """Spatially uniform steady state and the derived velocity-average weight.

    rho is the density level of species one (species two sits at 1/rho);
    state holds f = rho*chi1 and g = chi2/rho on the grid; d0 is the
    rho-weighted mean of the two profile second moments used to split the
    second velocity moment into a transported and a fluctuating part.
    """

    rho: float
    state: SpeciesPair
    d0: float


def build_equilibrium(
    rho: float, chi1: VelocityProfile, chi2: VelocityProfile, grid: GridSpec
) -> EquilibriumData:
    if rho <= 0.0:
        raise ValueError(f"rho must be positive, got {rho}")
    ones = np.ones((grid.nx, 1))
    state = SpeciesPair(rho * ones * chi1.values, ones * chi2.values / rho)
    d0 = (rho**2 * chi1.second_moment + chi2.second_moment) / (rho**2 + 1.0)
    return EquilibriumData(rho=float(rho), state=state, d0=d0)


def weighted_inner(
    a: SpeciesPair,
    b: SpeciesPair,
    chi1: VelocityProfile,
    chi2: VelocityProfile,
    rho: float,
    grid: GridSpec,
) -> float:
    """Phase-space inner product with weights 1/(rho*chi1) and rho/chi2.

    Makes the linearized collision operator self-adjoint and its kernel
    projection orthogonal.
    """
    w = a.f * b.f / (rho * chi1.values) + a.g * b.g * (rho / chi2.values)
    return grid.dx * grid.dv * float(np.sum(w))


def weighted_norm(
    state: SpeciesPair,
    chi1: VelocityProfile,
    chi2: VelocityProfile,
    rho: float,
    grid: GridSpec,
) -> float:
    return math.sqrt(max(weighted_inner(state, state, chi1, chi2, rho, grid), 0.0))


def macroscopic_densities(state: SpeciesPair, grid: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """Velocity averages (rho_f, rho_g), each of shape (nx,)."""
    return grid.dv * state.f.sum(axis=1), grid.dv * state.g.sum(axis=1)


def project_pi(
    state: SpeciesPair,
    rho: float,
    chi1: VelocityProfile,
    chi2: VelocityProfile,
    grid: GridSpec,
) -> SpeciesPair:
    """Orthogonal projection onto the kernel of the linearized collision operator.

    The kernel at each site is spanned by (rho^2*chi1, -chi2); the coefficient
    is (rho_f - rho_g)/(rho^2 + 1).
    """
    rho_f, rho_g = macroscopic_densities(state, grid)
    coef = (rho_f - rho_g) / (rho**2 + 1.0)
    return SpeciesPair(
        np.outer(coef, rho**2 * chi1.values), np.outer(coef, -chi2.values)
    )


def collision_linear(
    state: SpeciesPair,
    rho: float,
    chi1: VelocityProfile,
    chi2: VelocityProfile,
    grid: GridSpec,
) -> SpeciesPair:
    """Linearized generation-recombination operator around the uniform steady state."""
    rho_f, rho_g = macroscopic_densities(state, grid)
    lf = -rho * np.outer(rho_g, chi1.values) - state.f / rho
    lg = -np.outer(rho_f, chi2.values) / rho - rho * state.g
    return SpeciesPair(lf, lg)


def moments_ujs(
    h: np.ndarray, grid: GridSpec, d0: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Zeroth, first, and centered-second velocity moments of a field.

    u = dv*sum(h), j = dv*sum(v h), s = dv*sum((v^2 - d0) h), each (nx,).
    """
    v = grid.v_centers
    u = grid.dv * h.sum(axis=1)
    j = grid.dv * (h @ v)
    s = grid.dv * (h @ (v**2 - d0))
    return u, j, s


@dataclass(frozen=True)
class ConstantsLedger:
    """Every constant entering the discrete relaxation estimate.

    All are computed from the two profiles' actual discrete moments (the
    tightest admissible choice), the equilibrium density level, the grid, the
    LF diffusion strength, and the largest admissible time step.
    """

    rho: float
    lam: float
    dt_max: float
    c_mc: float      # collision coercivity on the non-kernel part
    c_u: float       # exact norm ratio between density difference and kernel part
    c_j1: float      # first-moment bound
    c_s: float       # centered-second-moment bound
    c_j2: float      # rho-weighted first-moment difference bound
    c_p: float       # sharp periodic Poincare constant
    c_tilde: float   # combined transport-coupling bound
    alpha1: float    # potential-increment bound
    delta1: float
    delta2: float
    delta3: float
    delta: float     # chosen mixing weight, delta_fraction * min(delta1..3)
    k_delta: float   # dissipation rate in front of ||F^{n+1}||^2
    c_upper: float   # entropy <= c_upper * ||F||^2
    c_lower: float   # entropy >= c_lower * ||F||^2
    kappa: float     # certified decay rate k_delta / c_upper


def constants_ledger(
    chi1: VelocityProfile,
    chi2: VelocityProfile,
    rho: float,
    grid: GridSpec,
    lam: float,
    dt_max: float,
    delta_fraction: float = 0.9,
) -> ConstantsLedger:
    """Evaluate the full chain of estimate constants for one configuration.

    lam is the LF diffusion strength (0 reproduces the centered transport,
    which drops the transport-dissipation terms); delta_fraction places the
    mixing weight strictly inside its admissible interval.
    """
    if rho <= 0.0:
        raise ValueError(f"rho must be positive, got {rho}")
    if lam < 0.0:
        raise ValueError(f"lam must be non-negative, got {lam}")
    if dt_max <= 0.0:
        raise ValueError(f"dt_max must be positive, got {dt_max}")
    if not 0.0 < delta_fraction < 1.0:
        raise ValueError(f"delta_fraction must lie in (0, 1), got {delta_fraction}")

    d1, d2 = chi1.second_moment, chi2.second_moment
    q1, q2 = chi1.fourth_moment, chi2.fourth_moment
    d0 = (rho**2 * d1 + d2) / (rho**2 + 1.0)

    c_mc = min(rho, 1.0 / rho)
    c_u = math.sqrt((rho**2 + 1.0) / rho)
    c_j1 = math.sqrt(2.0 * max(rho * d1, d2 / rho))
    # Centered second moments of each profile; nonnegative by Cauchy-Schwarz,
    # the max(..., 0) only guards rounding.
    s1 = max(q1 - 2.0 * d0 * d1 + d0**2, 0.0)
    s2 = max(q2 - 2.0 * d0 * d2 + d0**2, 0.0)
    c_s = math.sqrt(2.0 * max(rho * s1, s2 / rho))
    c_j2 = max(rho, 1.0 / rho) * c_j1
    c_p = poincare_constant(grid)
    c_tilde = c_s * c_u + c_j2 * c_p * c_u + 4.0 * lam * c_j1 * c_u

    delta1 = c_mc / c_j1**2
    delta2 = (c_mc * d0 * c_u**2) / (c_tilde**2 + c_j1**2 * d0 * c_u**2)
    delta3 = 1.0 / (2.0 * c_j1 * c_u * c_p)
    delta = delta_fraction * min(delta1, delta2, delta3)

    alpha1 = c_j1**2 + 4.0 * (lam * c_u) ** 2
    k_delta = 0.5 * min(c_mc - delta * c_j1**2, delta * d0 * c_u**2)
    c_upper = 0.5 + delta * c_j1 * c_u * c_p + delta * alpha1 * dt_max
    c_lower = 0.5 - delta * c_j1 * c_u * c_p

    return ConstantsLedger(
        rho=float(rho),
        lam=float(lam),
        dt_max=float(dt_max),
        c_mc=c_mc,
        c_u=c_u,
        c_j1=c_j1,
        c_s=c_s,
        c_j2=c_j2,
        c_p=c_p,
        c_tilde=c_tilde,
        alpha1=alpha1,
        delta1=delta1,
        delta2=delta2,
        delta3=delta3,
        delta=delta,
        k_delta=k_delta,
        c_upper=c_upper,
        c_lower=c_lower,
        kappa=k_delta / c_upper,
    )
