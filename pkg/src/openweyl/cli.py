"""Command-line interface for the analysis pipeline.

Subcommands mirror the pipeline stages (repeller, dimension, spectrum, weyl,
husimi, all) plus plot-data, which validates a finished run and writes the
figure-input index.  Flags mirror the run-configuration fields; when a
--config file is given its values take precedence over flags (persisted
configurations pin reruns exactly).
"""

from __future__ import annotations

import argparse
import json
import sys

from .artifacts import read_json
from .husimi import HusimiConfig
from .integrator import IntegratorConfig
from .model import ModelParams
from .pipeline import (
    ConfigError,
    DimensionConfig,
    QuantumConfig,
    RunConfig,
    WeylStageConfig,
    plot_data_index,
    run_pipeline,
)
from .repeller import SurvivalConfig
from .weyl import CountingBoxes


def _float_list(text):
    return tuple(float(v) for v in text.split(",") if v.strip())


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="openweyl",
        description="Classical repeller, resonance spectra, fractal Weyl counting "
        "and averaged Husimi sections for the rotating Henon-Heiles model.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    def add_stage(name, helptext):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", help="JSON run configuration (overrides flags)")
        p.add_argument("--output-dir", default="runs/default")
        p.add_argument("--seed", type=int, help="global seed override")
        p.add_argument("--workers", type=int, default=1)
        # model
        p.add_argument("--lam", type=float, default=0.1)
        p.add_argument("--omega", type=float, default=0.1)
        # classical
        p.add_argument("--energy-scaled", type=float, default=1.8,
                       help="section energy in units of the saddle energy")
        p.add_argument("--tau0", type=float, default=50.0)
        p.add_argument("--stretch", type=float, default=20.0)
        p.add_argument("--r-escape", type=float, default=20.0)
        p.add_argument("--n-samples", type=int, default=200_000)
        p.add_argument("--trapped-margin", type=float, default=12.0)
        p.add_argument("--step", type=float, default=0.05)
        p.add_argument("--step-tolerance", type=float, default=1e-9)
        # dimension
        p.add_argument("--dimension-input", help="points CSV (default: repeller artifact)")
        p.add_argument("--fit-smin", type=float, default=1e-2)
        p.add_argument("--fit-smax", type=float, default=1e-1)
        # quantum
        p.add_argument("--n-max", type=int, default=120)
        p.add_argument("--no-scale-n-max", action="store_true",
                       help="use n-max as is instead of scaling by 1/hbar")
        p.add_argument("--theta-grid", type=_float_list, default=(0.06, 0.09, 0.12))
        p.add_argument("--filter-tol", type=float, default=0.02,
                       help="theta-trajectory tolerance in units of E_s")
        p.add_argument("--dense-budget", type=int, default=6000)
        p.add_argument("--no-symmetry", action="store_true",
                       help="solve the full matrix instead of symmetry sectors")
        # weyl
        p.add_argument("--hbar-sweep", type=_float_list,
                       default=(0.90, 0.92, 0.94, 0.96, 0.98, 1.00))
        p.add_argument("--box-center", type=float, default=1.8)
        p.add_argument("--box-width", type=float, default=1.0)
        p.add_argument("--gamma-cap-factor", type=float, default=1.24)
        p.add_argument("--gamma-cap-absolute", action="store_true",
                       help="read the width cap in absolute units instead of E_s units")
        # husimi
        p.add_argument("--husimi-e0", type=float, default=1.8)
        p.add_argument("--n-each-side", type=int, default=20)
        p.add_argument("--husimi-grid", type=int, default=200)
        p.add_argument("--husimi-theta", type=float, default=0.2)
        p.add_argument("--husimi-hbar", type=float, default=1.0)
        p.add_argument("--store-vectors", action="store_true")
        return p

    for name, helptext in (
        ("repeller", "sample, filter survivors and record the SOS repeller"),
        ("dimension", "correlation dimension of a stored point set"),
        ("spectrum", "complex-rotation resonance catalogs over the hbar sweep"),
        ("weyl", "box counting and the fractal Weyl exponent fit"),
        ("husimi", "energy-averaged Husimi section"),
        ("all", "full chain: repeller, dimension, spectrum, weyl, husimi"),
    ):
        add_stage(name, helptext)

    p = sub.add_parser("plot-data", help="validate artifacts and emit plot_index.json")
    p.add_argument("--output-dir", default="runs/default")
    return ap


def config_from_args(args) -> RunConfig:
    model = ModelParams(lam=args.lam, omega=args.omega)
    cfg = RunConfig(
        model=model,
        integrator=IntegratorConfig(step=args.step, tolerance=args.step_tolerance),
        classical=SurvivalConfig(
            E=args.energy_scaled * model.saddle_energy,
            tau0=args.tau0,
            stretch=args.stretch,
            r_escape=args.r_escape,
            n_samples=args.n_samples,
            trapped_margin=args.trapped_margin,
        ),
        dimension=DimensionConfig(
            input_csv=args.dimension_input,
            fit_min=args.fit_smin,
            fit_max=args.fit_smax,
        ),
        quantum=QuantumConfig(
            n_max=args.n_max,
            scale_n_max=not args.no_scale_n_max,
            theta_grid=tuple(args.theta_grid),
            tol_scaled=args.filter_tol,
            dense_budget=args.dense_budget,
            use_symmetry=not args.no_symmetry,
        ),
        weyl=WeylStageConfig(
            boxes=CountingBoxes(
                center_E=args.box_center,
                width_E=args.box_width,
                gamma_cap_factor=args.gamma_cap_factor,
                gamma_cap_absolute=args.gamma_cap_absolute,
            ),
            hbar_sweep=tuple(args.hbar_sweep),
        ),
        husimi=HusimiConfig(
            E0=args.husimi_e0,
            n_each_side=args.n_each_side,
            grid_shape=(args.husimi_grid, args.husimi_grid),
            theta=args.husimi_theta,
        ),
        husimi_hbar=args.husimi_hbar,
        husimi_store_vectors=args.store_vectors,
        output_dir=args.output_dir,
        seed=args.seed,
        workers=args.workers,
    )
    if args.config:
        # persisted configuration wins over command-line flags
        loaded = read_json(args.config)
        base = cfg.to_dict()
        base.update(loaded)
        cfg = RunConfig.from_dict(base)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "plot-data":
        index = plot_data_index(args.output_dir)
        print(json.dumps(index, indent=2))
        return 0
    try:
        cfg = config_from_args(args)
        summary = run_pipeline(args.command, cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps(summary, indent=2, default=str))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
