"""Command-line interface.

    fpspectral run      --config FILE [--preset NAME] [--out DIR] [--seed N] [--skip-mc]
    fpspectral misalign --config FILE [--preset NAME] --eps 1,5,10 --trials 5
    fpspectral eig      --config FILE [--preset NAME]     (basis cache warm-up)

Either --config or --preset must identify the experiment.  Exit codes:
0 success, 2 configuration error, 3 numerical failure.  The environment
variable FPSPECTRAL_OUT overrides the output directory (and nothing else).
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

from .exceptions import ConfigError, FPSpectralError


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fpspectral",
        description="Spectral optimal control of Fokker-Planck dynamics")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="flat key = value configuration file")
        p.add_argument("--preset", choices=["quadratic", "quadratic-b005",
                                            "double-well"],
                       help="named experiment preset")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="random seed override")

    p_run = sub.add_parser("run", help="run one experiment and write outputs")
    common(p_run)
    p_run.add_argument("--skip-mc", action="store_true", default=None,
                       help="skip the Monte Carlo cross-validation stage")

    p_mis = sub.add_parser("misalign",
                           help="shape-function misalignment robustness study")
    common(p_mis)
    p_mis.add_argument("--eps", default=None,
                       help="comma-separated misalignment magnitudes")
    p_mis.add_argument("--trials", type=int, default=None,
                       help="random trials per magnitude")

    p_eig = sub.add_parser("eig", help="eigensolve only (warms the basis cache)")
    common(p_eig)
    return parser


def _resolve(args) -> "ExperimentConfig":
    from .experiment import resolve_config

    if not args.config and not args.preset:
        raise ConfigError("provide --config and/or --preset")
    overrides = {"seed": args.seed}
    out = os.environ.get("FPSPECTRAL_OUT") or args.out
    if out:
        overrides["out_dir"] = out
    if getattr(args, "skip_mc", None):
        overrides["skip_mc"] = True
    return resolve_config(file=args.config, preset=args.preset, **overrides)


def _cmd_run(args) -> int:
    from .experiment import emit_outputs, run_experiment

    config = _resolve(args)
    report = run_experiment(config)
    paths = emit_outputs(report, config.out_dir)
    finals = report.final_errors
    for name, value in finals.items():
        print(f"final error ({name}): {value:.6e}")
    if finals.get("optimal", 0) > 0:
        print(f"reduction vs uncontrolled: "
              f"{finals['uncontrolled'] / finals['optimal']:.1f}x")
    print(f"wrote {len(paths)} files to {Path(config.out_dir).resolve()}")
    return 0


def _cmd_misalign(args) -> int:
    from .experiment import misalignment_study, write_misalignment_csv

    config = _resolve(args)
    epsilons = None
    if args.eps:
        try:
            epsilons = [float(v) for v in args.eps.split(",") if v.strip()]
        except ValueError as exc:
            raise ConfigError(f"bad --eps list: {args.eps!r}") from exc
    study = misalignment_study(config, epsilons=epsilons, trials=args.trials)
    path = write_misalignment_csv(study, config.out_dir)
    print(f"base final error: {study.base_final_error:.6e}")
    for eps, delta in zip(study.epsilons, study.deltas_pct):
        print(f"eps = {eps:g}: mean final-error increase {delta:.1f}%")
    print(f"wrote {path}")
    return 0


def _cmd_eig(args) -> int:
    from . import eigensolver
    from .experiment import build_system

    config = _resolve(args)
    if not config.basis_cache:
        config = config.replace(
            basis_cache=str(Path(config.out_dir) / "basis_cache.npz"))
    tic = time.perf_counter()
    setup = build_system(config)
    elapsed = time.perf_counter() - tic
    lams = setup.basis.eigenvalues
    print(f"domain box: x in [{setup.grid.x_lo:g}, {setup.grid.x_hi:g}], "
          f"y in [{setup.grid.y_lo:g}, {setup.grid.y_hi:g}], "
          f"{setup.grid.nx} x {setup.grid.ny} points")
    print(f"{len(lams)} eigenvalues in [{lams[0]:.6f}, {lams[-1]:.6f}] "
          f"({elapsed:.1f} s)")
    print("head:", ", ".join(f"{v:.4f}" for v in lams[:10]))
    print(f"basis cached at {config.basis_cache}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {"run": _cmd_run, "misalign": _cmd_misalign, "eig": _cmd_eig}
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except FPSpectralError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
