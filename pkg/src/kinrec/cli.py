"""Command-line front end: config file plus overrides, one run per invocation."""

from __future__ import annotations

import argparse
import sys
from typing import Any, Sequence

from .config import FLUX_NAMES, MODEL_NAMES, ParseError, ValidationError, load_config
from .runner import ExperimentAbortedError, run_experiment


def _parse_snapshot_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(sorted(float(part) for part in text.split(",") if part.strip()))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad snapshot list {text!r}: {exc}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kinrec",
        description=(
            "Implicit finite-volume solver for a two-species kinetic "
            "generation-recombination system on a periodic interval."
        ),
    )
    parser.add_argument("config", nargs="?", default=None, help="INI config file (optional)")
    parser.add_argument("--test", type=int, choices=(1, 2, 3, 4), help="experiment preset")
    parser.add_argument("--flux", choices=FLUX_NAMES)
    parser.add_argument("--model", choices=MODEL_NAMES)
    parser.add_argument("--nx", type=int, help="spatial cells (odd)")
    parser.add_argument("--nv", type=int, help="velocity cells per half-axis")
    parser.add_argument("--vstar", type=float, help="velocity cutoff")
    parser.add_argument("--dt", type=float, help="time step (initial step when adaptive)")
    parser.add_argument("--dt-max", type=float, help="adaptive step ceiling")
    parser.add_argument("--tfinal", type=float, help="final time")
    parser.add_argument("--seed", type=int, help="RNG seed for random initial data")
    parser.add_argument("--out", help="output directory")
    parser.add_argument(
        "--snapshots",
        type=_parse_snapshot_list,
        metavar="t1,t2,...",
        help="comma-separated snapshot times",
    )
    parser.add_argument(
        "--emit-plot-script",
        action="store_true",
        default=None,
        help="write plot.py next to the output CSV files",
    )
    return parser


_FLAG_TO_FIELD = {
    "test": "test",
    "flux": "flux",
    "model": "model",
    "nx": "nx",
    "nv": "nv",
    "vstar": "v_star",
    "dt": "dt",
    "dt_max": "dt_max",
    "tfinal": "t_final",
    "seed": "seed",
    "out": "output_dir",
    "snapshots": "snapshot_times",
    "emit_plot_script": "emit_plot_script",
}


def overrides_from_args(args: argparse.Namespace) -> dict[str, Any]:
    overrides: dict[str, Any] = {}
    for flag, field in _FLAG_TO_FIELD.items():
        value = getattr(args, flag)
        if value is not None:
            overrides[field] = value
    return overrides


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, overrides_from_args(args))
    except (ParseError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        data = run_experiment(cfg)
    except ExperimentAbortedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        print(f"partial outputs written to {cfg.output_dir}", file=sys.stderr)
        return 1
    s = data.summary
    kappa = f"{s.fit.kappa:.6g} (r^2={s.fit.r_squared:.6f})" if s.fit else "n/a"
    print(f"model={s.model} flux={s.flux} lambda={s.lam:.6g} rho_inf={s.rho:.12g}")
    print(f"steps={s.n_steps} final_weighted_norm={s.final_weighted_norm:.6e}")
    print(f"fitted_decay_rate={kappa}")
    print(f"max_mass_drift={s.max_mass_drift_abs:.3e} (rel {s.max_mass_drift_rel:.3e})")
    print(f"outputs in {cfg.output_dir}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
