"""Command-line interface.

Subcommands:
  simulate      emit signal and probe histograms for a configuration
  reconstruct   build patterns from saved histograms and run the solver
  study         full pipeline: probes, histograms, reconstructions, report
  purity-sweep  fidelity versus true-state purity

Exit codes: 0 success, 2 configuration error, 3 solver failure on every
requested run.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .experiment import (
    ConfigError,
    ExperimentConfig,
    config_from_dict,
    load_config,
    run_experiment,
    simulate_histograms,
    sweep_purity,
)
from .homodyne import read_histogram_csv
from .patterns import ProbeSet, build_patterns, write_patterns_csv
from .quantum import NotPSDError, fidelity, purity, wigner_at
from .solver import (
    InfeasibleStartError,
    SingularSystemError,
    SolverOptions,
    SolverStatus,
    solve,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3


def _parse_int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise ConfigError(f"bad integer list {text!r}") from exc


def _parse_float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise ConfigError(f"bad number list {text!r}") from exc


def _load(args) -> ExperimentConfig:
    config = load_config(getattr(args, "config", None))
    updates = {}
    if getattr(args, "seed", None) is not None:
        updates["seed"] = args.seed
    if getattr(args, "out", None) is not None:
        updates["output_dir"] = str(args.out)
    if getattr(args, "probe_counts", None) is not None:
        updates["probe_counts"] = _parse_int_list(args.probe_counts)
    if getattr(args, "exact", False):
        updates["exact_probabilities"] = True
    try:
        return replace(config, **updates) if updates else config
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _cmd_simulate(args) -> int:
    config = _load(args)
    artifacts = simulate_histograms(config, args.out or config.output_dir)
    print(f"wrote {len(artifacts)} files to {args.out or config.output_dir}")
    return EXIT_OK


def _solver_options(args, base: SolverOptions) -> SolverOptions:
    updates = {}
    for name in ("mu0", "beta", "barrier_exponent", "residual_tol", "mu_tol",
                 "max_iterations", "backtrack_factor"):
        value = getattr(args, name, None)
        if value is not None:
            updates[name] = value
    try:
        return replace(base, **updates) if updates else base
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _cmd_reconstruct(args) -> int:
    pattern_dir = Path(args.patterns)
    manifest_path = pattern_dir / "manifest.json"
    try:
        with open(manifest_path) as fh:
            manifest = json.load(fh)
        config = config_from_dict(manifest["config"])
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot load {manifest_path}: {exc}") from exc
    opts = _solver_options(args, config.solver)

    signal = read_histogram_csv(pattern_dir / "signal.csv")
    probe_paths = sorted(pattern_dir.glob("probe_*.csv"))
    if not probe_paths:
        raise ConfigError(f"no probe_*.csv histograms in {pattern_dir}")
    histograms = [read_histogram_csv(p) for p in probe_paths]
    probes = config.probes(len(histograms))
    patterns = build_patterns(histograms, signal)

    out = Path(args.out) if args.out else pattern_dir / "reconstruction"
    out.mkdir(parents=True, exist_ok=True)
    write_patterns_csv(patterns, out / "patterns.csv")
    try:
        result = solve(patterns, probes, opts)
    except (InfeasibleStartError, SingularSystemError) as exc:
        print(f"solver failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER

    rho_true = config.true_state.to_density(config.dimension)
    summary = {
        "status": result.status.value,
        "iterations": result.iterations,
        "objective": result.objective,
        "kkt_residual": result.residual,
        "w0": wigner_at(result.rho, 0.0),
        "purity": purity(result.rho),
        "fidelity_vs_configured_state": fidelity(rho_true, result.rho),
    }
    with open(out / "reconstruction.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_weights(result.x, out / "weights.csv")
    _write_rho(result.rho.matrix, out / "rho.csv")
    result.trace.to_csv(out / "trace.csv")
    if not args.no_figures:
        from . import figures

        figures.render_convergence({probes.n_probes: result.trace}, out / "convergence.png")
    print(
        f"status={summary['status']} iterations={summary['iterations']} "
        f"W(0)={summary['w0']:.4f} fidelity={summary['fidelity_vs_configured_state']:.4f}"
    )
    return EXIT_OK


def _write_weights(x: np.ndarray, path) -> None:
    import csv

    from .patterns import full_weights

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["probe", "weight"])
        for i, w in enumerate(full_weights(x)):
            writer.writerow([i, repr(float(w))])


def _write_rho(matrix: np.ndarray, path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row", "col", "re", "im"])
        for r in range(matrix.shape[0]):
            for c in range(matrix.shape[1]):
                writer.writerow([r, c, repr(float(matrix[r, c].real)),
                                 repr(float(matrix[r, c].imag))])


def _cmd_study(args) -> int:
    config = _load(args)
    report = run_experiment(config, out_dir=args.out, render_figures=not args.no_figures)
    failed = sum(1 for r in report.records if r.error is not None)
    for r in report.records:
        if r.error is not None:
            print(f"N={r.probes:3d}  failed: {r.error}", file=sys.stderr)
        else:
            print(
                f"N={r.probes:3d}  status={r.status:<14s} fidelity={r.fidelity:.4f} "
                f"W(0)={r.w0:+.4f} iterations={r.iterations}"
            )
    if failed == len(report.records):
        return EXIT_SOLVER
    return EXIT_OK


def _cmd_purity_sweep(args) -> int:
    config = _load(args)
    try:
        records = sweep_purity(
            config,
            _parse_float_list(args.gammas),
            args.runs,
            out_dir=args.out,
            render_figures=not args.no_figures,
        )
    except NotPSDError as exc:
        raise ConfigError(str(exc)) from exc
    for r in records:
        print(
            f"gamma={r.gamma:.3f} purity={r.purity:.4f} "
            f"fidelity={r.mean_fidelity:.4f} +- {r.std_fidelity:.4f}"
        )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dptomo",
        description="Data-pattern tomography: simulate homodyne data and "
        "reconstruct states by positivity-constrained least squares.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_counts=False, with_exact=False, with_figures=True):
        p.add_argument("--config", type=Path, default=None, help="JSON config file")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument("--out", type=Path, default=None, help="output directory")
        if with_counts:
            p.add_argument("--probe-counts", dest="probe_counts", default=None,
                           help="comma-separated list, e.g. 13,16,60")
        if with_exact:
            p.add_argument("--exact", action="store_true",
                           help="use exact outcome probabilities (no sampling)")
        if with_figures:
            p.add_argument("--no-figures", action="store_true",
                           help="skip PNG rendering, keep CSV output only")

    p_sim = sub.add_parser("simulate", help="emit histograms only")
    common(p_sim, with_figures=False)
    p_sim.set_defaults(func=_cmd_simulate)

    p_rec = sub.add_parser("reconstruct", help="patterns + solve from saved histograms")
    p_rec.add_argument("--patterns", type=Path, required=True,
                       help="directory produced by 'simulate'")
    p_rec.add_argument("--out", type=Path, default=None)
    p_rec.add_argument("--mu0", type=float, default=None)
    p_rec.add_argument("--beta", type=float, default=None)
    p_rec.add_argument("--barrier-exponent", dest="barrier_exponent", type=float, default=None)
    p_rec.add_argument("--residual-tol", dest="residual_tol", type=float, default=None)
    p_rec.add_argument("--mu-tol", dest="mu_tol", type=float, default=None)
    p_rec.add_argument("--max-iterations", dest="max_iterations", type=int, default=None)
    p_rec.add_argument("--backtrack-factor", dest="backtrack_factor", type=float, default=None)
    p_rec.add_argument("--no-figures", action="store_true")
    p_rec.set_defaults(func=_cmd_reconstruct)

    p_study = sub.add_parser("study", help="full reconstruction study")
    common(p_study, with_counts=True, with_exact=True)
    p_study.set_defaults(func=_cmd_study)

    p_sweep = sub.add_parser("purity-sweep", help="fidelity vs true-state purity")
    common(p_sweep)
    p_sweep.add_argument("--gammas", default="0,0.1,0.2,0.3,0.4,0.5",
                         help="comma-separated coherence values in [0, 0.5]")
    p_sweep.add_argument("--runs", type=int, default=50, help="repetitions per gamma")
    p_sweep.set_defaults(func=_cmd_purity_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
