"""Experiment driver: initial data, time marching, diagnostics, output files.

The evolved variable differs by model.  Linear runs march the deviation from
equilibrium (the well-prepared part of the data), so norms and decay fits act
directly on the evolved state.  Nonlinear runs march the full distribution
pair and diagnostics are computed on state minus equilibrium.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .config import RunConfig, effective_config_text
from .diagnostics import (
    DecayFit,
    PotentialState,
    TimeSeriesRecord,
    fit_decay_rate,
    modified_entropy,
    solve_discrete_poisson,
)
from .grid import (
    GridSpec,
    NAMED_PROFILES,
    VelocityProfile,
    build_grid,
    discretize_profile,
    profile_from_samples,
)
from .linear import CENTERED, LAX_FRIEDRICHS, Flux, assemble_linear_operator
from .nonlinear import (
    AdaptiveController,
    BoundsEnvelope,
    BoundsReport,
    NewtonConfig,
    NonlinearStepper,
    check_maximum_principle,
    adaptive_advance,
)
from .state import (
    ConstantsLedger,
    EquilibriumData,
    SpeciesPair,
    build_equilibrium,
    constants_ledger,
    equilibrium_rho,
    macroscopic_densities,
    mass_difference,
    moments_ujs,
    weighted_norm,
)

TIMESERIES_HEADER = "t,weighted_norm,rho_f_l2,rho_g_l2,entropy,mass_difference,bounds_pass,dt_used,newton_iters"

# Width of the reporting envelope around the equilibrium amplitudes, as a
# fraction of rho.  Bounds columns in the output always use this envelope;
# it is a diagnostic, not a constraint on the solver.
REPORT_ENVELOPE_FRACTION = 0.2


def resolve_lambda(cfg: RunConfig, grid: GridSpec) -> float:
    """Numerical diffusion strength for the Lax-Friedrichs flux.

    Linear runs take dx/(2 dt): large implicit steps tolerate it and the
    measured decay rate stays flux-independent.  Nonlinear runs additionally
    clamp from below by v*/2, the monotonicity threshold that makes the
    update order-preserving and keeps Newton inside the positive cone.
    """
    if cfg.flux != LAX_FRIEDRICHS:
        return 0.0
    if cfg.lam is not None:
        return cfg.lam
    if cfg.model == "linear":
        return grid.dx / (2.0 * cfg.dt)
    return max(cfg.v_star / 2.0, grid.dx / (2.0 * cfg.dt))


def resolve_drift_tolerance(cfg: RunConfig) -> float:
    """Relative mass-difference drift allowed per Newton solve.

    The centered flux is the known-degenerate case: its runs exist to expose
    drift, so enforcement is disabled rather than aborting them.
    """
    if cfg.mass_diff_drift_tol is not None:
        return cfg.mass_diff_drift_tol
    return math.inf if cfg.flux == CENTERED else 1e-10


def resolve_profile(name: str, grid: GridSpec) -> VelocityProfile:
    if name in NAMED_PROFILES:
        return discretize_profile(NAMED_PROFILES[name], grid)
    if name.startswith("file:"):
        samples = np.loadtxt(name[len("file:"):], dtype=float).reshape(-1)
        return profile_from_samples(samples, grid, symmetrize=True)
    raise ValueError(f"unknown velocity profile {name!r}")


def _bump(x: np.ndarray, v: np.ndarray) -> np.ndarray:
    # Gaussian blob centred at x = pi/2, v = 0 with width parameter 0.2.
    return np.exp(-(np.square(x - math.pi / 2.0)[:, None] + np.square(v)[None, :] / 2.0) / 0.2)


def initial_data(cfg: RunConfig, grid: GridSpec, rng: np.random.Generator) -> SpeciesPair:
    """Full initial distributions for the configured experiment.

    Tests 1 and 2 share a smooth two-species bump; test 3 uses a mean-zero
    velocity-ring profile times a spatial cosine; test 4 draws iid uniform
    cell values from the seeded generator.  Without a test number the data
    family follows the model kind.
    """
    x, v = grid.x_centers, grid.v_centers
    test = cfg.test
    if test is None:
        test = 1 if cfg.model == "linear" else 3
    if test in (1, 2):
        f = 10.0 * _bump(x, v)
        g = (1.0 + np.cos(4.0 * x))[:, None] * _bump(x, v)
        return SpeciesPair(f=f, g=g)
    if test == 3:
        maxwellian = np.exp(-np.square(v) / 2.0) / math.sqrt(2.0 * math.pi)
        f = (1.0 + np.cos(2.0 * x))[:, None] * (maxwellian * v**4)[None, :]
        g = (1.0 + np.cos(4.0 * x))[:, None] * _bump(x, v)
        return SpeciesPair(f=f, g=g)
    shape = (grid.nx, grid.n_vel)
    return SpeciesPair(f=rng.random(shape), g=rng.random(shape))


@dataclass(frozen=True)
class RunSetup:
    """Everything derived from the configuration before time marching."""

    cfg: RunConfig
    grid: GridSpec
    chi1: VelocityProfile
    chi2: VelocityProfile
    flux: Flux
    data0: SpeciesPair
    rho: float
    equilibrium: EquilibriumData
    ledger: ConstantsLedger
    envelope: BoundsEnvelope
    drift_tol: float
    t_final: float


def build_setup(cfg: RunConfig) -> RunSetup:
    grid = build_grid(cfg.torus_length, cfg.nx, cfg.nv, cfg.v_star)
    chi1 = resolve_profile(cfg.chi1, grid)
    chi2 = resolve_profile(cfg.chi2, grid)
    rng = np.random.default_rng(cfg.seed)
    data0 = initial_data(cfg, grid, rng)
    rho = equilibrium_rho(mass_difference(data0, grid), grid.torus_length)
    eq = build_equilibrium(rho, chi1, chi2, grid)
    lam = resolve_lambda(cfg, grid)
    flux = Flux(kind=cfg.flux, lam=lam)
    dt_cap = cfg.dt if cfg.model == "linear" else cfg.dt_max
    ledger = constants_ledger(chi1, chi2, rho, grid, lam, dt_cap, cfg.delta_fraction)
    envelope = BoundsEnvelope(
        gamma1=REPORT_ENVELOPE_FRACTION * rho,
        gamma2=REPORT_ENVELOPE_FRACTION * rho,
    )
    t_final = cfg.t_final if cfg.t_final is not None else 50.0
    return RunSetup(
        cfg=cfg,
        grid=grid,
        chi1=chi1,
        chi2=chi2,
        flux=flux,
        data0=data0,
        rho=rho,
        equilibrium=eq,
        ledger=ledger,
        envelope=envelope,
        drift_tol=resolve_drift_tolerance(cfg),
        t_final=t_final,
    )


@dataclass(frozen=True)
class Snapshot:
    requested_t: float
    actual_t: float
    state: SpeciesPair


class DiagnosticsRecorder:
    """Per-step diagnostics shared by both marches.

    Entropy recording degrades gracefully: once the deviation density stops
    being mean-free (conservation drift on a degenerate flux) the discrete
    potential is no longer defined and the entropy column goes empty.
    """

    def __init__(self, setup: RunSetup) -> None:
        self._setup = setup
        self._pot: PotentialState | None = None
        self.records: list[TimeSeriesRecord] = []
        self.snapshots: list[Snapshot] = []
        self._pending = list(setup.cfg.snapshot_times)

    def _entropy(self, deviation: SpeciesPair, dt: float) -> float | None:
        setup = self._setup
        u = moments_ujs(deviation.f - deviation.g, setup.grid, setup.equilibrium.d0)[0]
        try:
            phi = solve_discrete_poisson(u, setup.grid)
        except ValueError:
            self._pot = None
            return None
        if self._pot is None:
            self._pot = PotentialState(phi=phi)
        else:
            self._pot = self._pot.advanced(phi)
        return modified_entropy(
            deviation,
            self._pot,
            dt,
            setup.ledger,
            setup.chi1,
            setup.chi2,
            setup.grid,
            setup.equilibrium.d0,
        )

    def observe(
        self,
        t: float,
        evolved: SpeciesPair,
        deviation: SpeciesPair,
        dt_used: float | None,
        newton_iterations: int | None,
        check_bounds: bool,
    ) -> TimeSeriesRecord:
        setup = self._setup
        grid = setup.grid
        rho_f, rho_g = macroscopic_densities(deviation, grid)
        report: BoundsReport | None = None
        if check_bounds:
            report = check_maximum_principle(
                evolved, setup.envelope, setup.rho, setup.chi1, setup.chi2
            )
        entropy_dt = dt_used if dt_used is not None else setup.cfg.dt
        record = TimeSeriesRecord(
            t=t,
            weighted_norm=weighted_norm(deviation, setup.chi1, setup.chi2, setup.rho, grid),
            rho_f_l2=math.sqrt(grid.dx * float(np.sum(np.square(rho_f)))),
            rho_g_l2=math.sqrt(grid.dx * float(np.sum(np.square(rho_g)))),
            entropy=self._entropy(deviation, entropy_dt),
            mass_difference=mass_difference(evolved, grid),
            bounds_pass=None if report is None else report.passed,
            dt_used=dt_used,
            newton_iterations=newton_iterations,
        )
        self.records.append(record)
        while self._pending and t >= self._pending[0] - 1e-9:
            self.snapshots.append(
                Snapshot(requested_t=self._pending.pop(0), actual_t=t, state=evolved.copy())
            )
        return record


@dataclass(frozen=True)
class RunSummary:
    model: str
    flux: str
    lam: float
    rho: float
    initial_mass_difference: float
    fit: DecayFit | None
    final_weighted_norm: float
    max_mass_drift_abs: float
    max_mass_drift_rel: float
    f_ratio_min: float | None
    f_ratio_max: float | None
    g_ratio_min: float | None
    g_ratio_max: float | None
    n_steps: int
    wall_clock_s: float


@dataclass(frozen=True)
class RunData:
    setup: RunSetup
    records: list[TimeSeriesRecord]
    snapshots: list[Snapshot]
    summary: RunSummary


class ExperimentAbortedError(RuntimeError):
    """A run failed mid-march; partial_data holds everything recorded so far."""

    def __init__(self, message: str, partial_data: "RunData") -> None:
        super().__init__(message)
        self.partial_data = partial_data


def _march_linear(setup: RunSetup, recorder: DiagnosticsRecorder) -> None:
    cfg = setup.cfg
    deviation = setup.data0 - setup.equilibrium.state
    op = assemble_linear_operator(
        setup.grid, setup.chi1, setup.chi2, setup.rho, cfg.dt, setup.flux
    )
    recorder.observe(0.0, deviation, deviation, None, None, False)
    n_steps = int(math.floor(setup.t_final / cfg.dt + 1e-9))
    for n in range(1, n_steps + 1):
        deviation = op.solve(deviation)
        recorder.observe(n * cfg.dt, deviation, deviation, cfg.dt, None, False)


def _march_nonlinear(setup: RunSetup, recorder: DiagnosticsRecorder) -> None:
    cfg = setup.cfg
    state = setup.data0.copy()
    stepper = NonlinearStepper(
        setup.grid,
        setup.chi1,
        setup.chi2,
        setup.flux,
        envelope=setup.envelope if cfg.truncated else None,
        rho=setup.rho if cfg.truncated else None,
    )
    newton_cfg = NewtonConfig(
        tol_residual=cfg.newton_tol,
        max_iterations=cfg.newton_max_iterations,
        mass_diff_drift_tol=setup.drift_tol,
    )
    controller = AdaptiveController(
        dt=cfg.dt,
        dt_min=cfg.dt_min,
        dt_max=cfg.dt_max,
        accept_iteration_budget=cfg.accept_iteration_budget,
    )
    recorder.observe(0.0, state, state - setup.equilibrium.state, None, None, True)
    t = 0.0
    while t < setup.t_final - 1e-12:
        remaining = setup.t_final - t
        attempt = controller
        if remaining < controller.dt:
            attempt = replace(
                controller, dt=remaining, dt_min=min(controller.dt_min, remaining)
            )
        result = adaptive_advance(state, attempt, newton_cfg, stepper)
        state = result.state
        t += result.dt_used
        next_dt = min(max(result.controller.dt, cfg.dt_min), cfg.dt_max)
        controller = replace(controller, dt=next_dt)
        recorder.observe(
            t,
            state,
            state - setup.equilibrium.state,
            result.dt_used,
            result.newton_iterations,
            True,
        )


def _finalize(setup: RunSetup, recorder: DiagnosticsRecorder, start: float) -> RunData:
    cfg = setup.cfg
    records = recorder.records

    fit: DecayFit | None = None
    times = np.array([r.t for r in records])
    norms = np.array([r.weighted_norm for r in records])
    try:
        fit = fit_decay_rate(times, norms)
    except ValueError:
        fit = None

    mass0 = records[0].mass_difference
    drift = max(abs(r.mass_difference - mass0) for r in records)
    scale = max(1.0, abs(mass0))

    ratios: dict[str, float | None] = {k: None for k in ("f_min", "f_max", "g_min", "g_max")}
    if cfg.model == "nonlinear":
        bounds_states = [setup.data0] + [s.state for s in recorder.snapshots]
        reports = [
            check_maximum_principle(s, setup.envelope, setup.rho, setup.chi1, setup.chi2)
            for s in bounds_states
        ]
        ratios = {
            "f_min": min(r.f_ratio_min for r in reports),
            "f_max": max(r.f_ratio_max for r in reports),
            "g_min": min(r.g_ratio_min for r in reports),
            "g_max": max(r.g_ratio_max for r in reports),
        }

    summary = RunSummary(
        model=cfg.model,
        flux=cfg.flux,
        lam=setup.flux.lam,
        rho=setup.rho,
        initial_mass_difference=mass0,
        fit=fit,
        final_weighted_norm=records[-1].weighted_norm,
        max_mass_drift_abs=drift,
        max_mass_drift_rel=drift / scale,
        f_ratio_min=ratios["f_min"],
        f_ratio_max=ratios["f_max"],
        g_ratio_min=ratios["g_min"],
        g_ratio_max=ratios["g_max"],
        n_steps=len(records) - 1,
        wall_clock_s=time.perf_counter() - start,
    )
    return RunData(setup=setup, records=records, snapshots=recorder.snapshots, summary=summary)


def execute_run(cfg: RunConfig) -> RunData:
    start = time.perf_counter()
    setup = build_setup(cfg)
    recorder = DiagnosticsRecorder(setup)
    march = _march_linear if cfg.model == "linear" else _march_nonlinear
    try:
        march(setup, recorder)
    except Exception as exc:
        if not recorder.records:
            raise
        raise ExperimentAbortedError(
            f"{cfg.model} run with {cfg.flux} flux aborted at "
            f"t={recorder.records[-1].t:.6g}: {exc}",
            _finalize(setup, recorder, start),
        ) from exc
    return _finalize(setup, recorder, start)


def _fmt(value: float | None) -> str:
    if value is None:
        return ""
    return "%.17g" % value


def timeseries_csv(records: list[TimeSeriesRecord]) -> str:
    lines = [TIMESERIES_HEADER]
    for r in records:
        bounds = "" if r.bounds_pass is None else ("1" if r.bounds_pass else "0")
        iters = "" if r.newton_iterations is None else str(r.newton_iterations)
        lines.append(
            ",".join(
                (
                    _fmt(r.t),
                    _fmt(r.weighted_norm),
                    _fmt(r.rho_f_l2),
                    _fmt(r.rho_g_l2),
                    _fmt(r.entropy),
                    _fmt(r.mass_difference),
                    bounds,
                    _fmt(r.dt_used),
                    iters,
                )
            )
        )
    return "\n".join(lines) + "\n"


def snapshot_csv(snapshot: Snapshot, grid: GridSpec) -> str:
    lines = [
        "# t=%s" % _fmt(snapshot.actual_t),
        "# N=%d L=%d" % (grid.nx, grid.nv),
        "i,j,x,v,f,g",
    ]
    f, g = snapshot.state.f, snapshot.state.g
    for i in range(grid.nx):
        x = grid.x_centers[i]
        for j in range(grid.n_vel):
            lines.append(
                "%d,%d,%s,%s,%s,%s"
                % (i, j, _fmt(x), _fmt(grid.v_centers[j]), _fmt(f[i, j]), _fmt(g[i, j]))
            )
    return "\n".join(lines) + "\n"


def _snapshot_tag(requested_t: float) -> str:
    return ("%g" % requested_t).replace(".", "p").replace("-", "m")


def summary_text(data: RunData) -> str:
    s = data.summary
    fit = s.fit
    pairs = [
        ("model", s.model),
        ("flux", s.flux),
        ("lambda", _fmt(s.lam)),
        ("rho_inf", _fmt(s.rho)),
        ("initial_mass_difference", _fmt(s.initial_mass_difference)),
        ("kappa_fit", _fmt(fit.kappa) if fit else ""),
        ("r_squared", _fmt(fit.r_squared) if fit else ""),
        ("prefactor", _fmt(fit.prefactor) if fit else ""),
        ("final_weighted_norm", _fmt(s.final_weighted_norm)),
        ("max_mass_drift_abs", _fmt(s.max_mass_drift_abs)),
        ("max_mass_drift_rel", _fmt(s.max_mass_drift_rel)),
        ("f_ratio_min", _fmt(s.f_ratio_min)),
        ("f_ratio_max", _fmt(s.f_ratio_max)),
        ("g_ratio_min", _fmt(s.g_ratio_min)),
        ("g_ratio_max", _fmt(s.g_ratio_max)),
        ("n_steps", str(s.n_steps)),
        ("wall_clock_s", _fmt(s.wall_clock_s)),
    ]
    return "\n".join(f"{k} = {v}" for k, v in pairs) + "\n"


_PLOT_SCRIPT = """\
#!/usr/bin/env python3
\"\"\"Plot the time series and snapshots written next to this script.\"\"\"
import csv
import glob
import os
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))

with open(os.path.join(here, "timeseries.csv")) as fh:
    rows = list(csv.DictReader(fh))
t = [float(r["t"]) for r in rows]
norm = [float(r["weighted_norm"]) for r in rows]
fig, ax = plt.subplots()
ax.semilogy(t, norm, marker=".", lw=1)
ax.set_xlabel("t")
ax.set_ylabel("weighted norm of deviation")
fig.savefig(os.path.join(here, "decay.png"), dpi=150)

for path in sorted(glob.glob(os.path.join(here, "snapshot_t*.csv"))):
    with open(path) as fh:
        header = fh.readline().strip()
        dims = fh.readline().strip().split()
        n = int(dims[1].split("=")[1])
        l2 = 2 * int(dims[2].split("=")[1])
        rows = list(csv.DictReader(fh))
    f = [[0.0] * l2 for _ in range(n)]
    for r in rows:
        f[int(r["i"])][int(r["j"])] = float(r["f"])
    fig, ax = plt.subplots()
    ax.imshow([list(col) for col in zip(*f)], origin="lower", aspect="auto")
    ax.set_title(header.lstrip("# "))
    ax.set_xlabel("x cell")
    ax.set_ylabel("v cell")
    fig.savefig(path.replace(".csv", ".png"), dpi=150)
"""


def write_outputs(data: RunData, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "timeseries.csv").write_text(timeseries_csv(data.records), encoding="utf-8")
    for snapshot in data.snapshots:
        name = f"snapshot_t{_snapshot_tag(snapshot.requested_t)}.csv"
        (out / name).write_text(snapshot_csv(snapshot, data.setup.grid), encoding="utf-8")
    (out / "summary.txt").write_text(summary_text(data), encoding="utf-8")
    (out / "config.ini").write_text(effective_config_text(data.setup.cfg), encoding="utf-8")
    if data.setup.cfg.emit_plot_script:
        (out / "plot.py").write_text(_PLOT_SCRIPT, encoding="utf-8")
    return out


def run_experiment(cfg: RunConfig) -> RunData:
    """Execute a configured run and write its output directory.

    On a mid-run failure the partial records gathered so far are still
    written before the error propagates.
    """
    try:
        data = execute_run(cfg)
    except ExperimentAbortedError as exc:
        write_outputs(exc.partial_data, cfg.output_dir)
        raise
    write_outputs(data, cfg.output_dir)
    return data
