"""End-to-end simulated tomography runs: spiral probes, histogram
generation, reconstruction, and the report artifacts (CSV tables, a JSON
manifest, and rendered figures).

Seed scheme: one master seed per run.  The signal histogram is drawn from
stream (seed, 0) and probe xi from stream (seed, 1 + xi); purity-sweep
repetition r for the gamma at index gi uses (seed, gi, r, stream).  The
signal histogram is drawn once per master seed and shared across probe
counts, mirroring an experiment where the signal data set is fixed while
probes accumulate.
"""
from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .homodyne import (
    Histogram,
    MeasurementConfig,
    build_povm,
    outcome_probabilities,
    sample_histogram,
    write_histogram_csv,
)
from .patterns import PatternMatrix, ProbeSet, build_patterns
from .quantum import DensityMatrix, NotPSDError, fidelity, fock_mixture, purity, wigner_at
from .solver import (
    ConvergenceTrace,
    InfeasibleStartError,
    SingularSystemError,
    SolveResult,
    SolverOptions,
    SolverStatus,
    solve,
)


class ConfigError(ValueError):
    """A configuration document is malformed or violates an invariant."""


@dataclass(frozen=True)
class SpiralParams:
    """Probe spiral unwinding from the origin, equidistant in radius and
    angle: alpha_k = (offset + (k-1) delta_r) exp(i (k-1) delta_phi)."""

    delta_r: float = 0.0175
    delta_phi: float = 0.5
    offset: float | None = None  # first-probe radius; None means delta_r

    def __post_init__(self) -> None:
        if self.delta_r <= 0:
            raise ValueError("delta_r must be positive")
        if self.offset is not None and self.offset <= 0:
            raise ValueError("offset must be positive")

    @property
    def first_radius(self) -> float:
        return self.delta_r if self.offset is None else self.offset


def spiral_amplitudes(count: int, params: SpiralParams | None = None) -> np.ndarray:
    """Coherent amplitudes along the spiral; radii strictly increasing."""
    if count < 2:
        raise ValueError("need at least two probes")
    p = params or SpiralParams()
    k = np.arange(count)
    return (p.first_radius + k * p.delta_r) * np.exp(1j * k * p.delta_phi)


def grid_amplitudes(count: int, spacing: float = 0.25) -> np.ndarray:
    """Alternative rectangular-grid layout: lattice points sorted by radius
    (then angle), origin excluded, truncated to ``count`` probes."""
    if count < 2:
        raise ValueError("need at least two probes")
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    side = int(np.ceil(np.sqrt(count))) + 2
    ticks = spacing * np.arange(-side, side + 1)
    re, im = np.meshgrid(ticks, ticks)
    pts = (re + 1j * im).ravel()
    pts = pts[np.abs(pts) > 0]
    order = np.lexsort((np.angle(pts), np.abs(pts)))
    return pts[order][:count]


def spiral_probes(count: int, params: SpiralParams | None, dim: int) -> ProbeSet:
    """ProbeSet for the first ``count`` spiral amplitudes at dimension d."""
    return ProbeSet.from_amplitudes(spiral_amplitudes(count, params), dim)


@dataclass(frozen=True)
class StateSpec:
    """Declarative Fock-basis state: populations plus optional coherences
    given as (i, j, value) with i < j."""

    populations: tuple[float, ...] = (0.4, 0.6)
    coherences: tuple[tuple[int, int, complex], ...] = ()

    def to_density(self, dim: int) -> DensityMatrix:
        return fock_mixture(
            self.populations,
            {(i, j): z for i, j, z in self.coherences},
            dim=dim,
        )


DEFAULT_PROBE_COUNTS = (13, 15, 16, 25, 30, 40, 50, 60)


@dataclass(frozen=True)
class ExperimentConfig:
    """Full description of one simulated tomography study."""

    dimension: int = 8
    true_state: StateSpec = StateSpec()
    measurement: MeasurementConfig | None = None
    spiral: SpiralParams = SpiralParams()
    probe_layout: str = "spiral"
    grid_spacing: float = 0.25
    probe_counts: tuple[int, ...] = DEFAULT_PROBE_COUNTS
    solver: SolverOptions = SolverOptions()
    seed: int = 20250811
    output_dir: str = "runs/study"
    exact_probabilities: bool = False

    def __post_init__(self) -> None:
        if self.dimension < 2:
            raise ValueError("dimension must be >= 2")
        meas = self.measurement or MeasurementConfig(dim=self.dimension)
        if meas.dim != self.dimension:
            meas = replace(meas, dim=self.dimension)
        object.__setattr__(self, "measurement", meas)
        counts = tuple(int(n) for n in self.probe_counts)
        if not counts:
            raise ValueError("probe_counts must not be empty")
        if any(b <= a for a, b in zip(counts, counts[1:])):
            raise ValueError("probe_counts must be strictly ascending")
        if counts[0] < 2:
            raise ValueError("every probe count must be >= 2")
        if counts[-1] >= meas.n_outcomes:
            raise ValueError(
                f"largest probe count {counts[-1]} must stay below the "
                f"{meas.n_outcomes} measurement outcomes"
            )
        object.__setattr__(self, "probe_counts", counts)
        if self.probe_layout not in ("spiral", "grid"):
            raise ValueError("probe_layout must be 'spiral' or 'grid'")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")

    def probes(self, count: int) -> ProbeSet:
        if self.probe_layout == "grid":
            amps = grid_amplitudes(count, self.grid_spacing)
        else:
            amps = spiral_amplitudes(count, self.spiral)
        return ProbeSet.from_amplitudes(amps, self.dimension)


# ---------------------------------------------------------------------------
# config (de)serialization: plain JSON mirroring the dataclass field names


def _check_keys(section: dict, allowed: set[str], where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(sorted(unknown))}")


def _state_from_dict(data: dict) -> StateSpec:
    _check_keys(data, {"populations", "coherences"}, "true_state")
    coherences = []
    for entry in data.get("coherences", []):
        if len(entry) == 3:
            i, j, re = entry
            z = complex(re)
        elif len(entry) == 4:
            i, j, re, im = entry
            z = complex(re, im)
        else:
            raise ConfigError("coherence entries must be [i, j, re] or [i, j, re, im]")
        coherences.append((int(i), int(j), z))
    return StateSpec(
        populations=tuple(float(p) for p in data.get("populations", (0.4, 0.6))),
        coherences=tuple(coherences),
    )


def config_from_dict(data: dict) -> ExperimentConfig:
    """Build an ExperimentConfig from a parsed JSON document; unknown keys
    anywhere in the document are rejected."""
    top = {
        "dimension", "true_state", "measurement", "spiral", "probe_layout",
        "grid_spacing", "probe_counts", "solver", "seed", "output_dir",
        "exact_probabilities",
    }
    _check_keys(data, top, "config")
    kwargs: dict = {}
    try:
        if "dimension" in data:
            kwargs["dimension"] = int(data["dimension"])
        if "true_state" in data:
            kwargs["true_state"] = _state_from_dict(data["true_state"])
        if "measurement" in data:
            sec = dict(data["measurement"])
            allowed = {f.name for f in fields(MeasurementConfig)} - {"dim"}
            _check_keys(sec, allowed, "measurement")
            if "quadrature_range" in sec:
                sec["quadrature_range"] = tuple(float(v) for v in sec["quadrature_range"])
            dim = kwargs.get("dimension", ExperimentConfig.dimension)
            kwargs["measurement"] = MeasurementConfig(dim=dim, **sec)
        if "spiral" in data:
            sec = dict(data["spiral"])
            _check_keys(sec, {f.name for f in fields(SpiralParams)}, "spiral")
            kwargs["spiral"] = SpiralParams(**sec)
        if "solver" in data:
            sec = dict(data["solver"])
            _check_keys(sec, {f.name for f in fields(SolverOptions)}, "solver")
            kwargs["solver"] = SolverOptions(**sec)
        for key in ("probe_layout", "output_dir"):
            if key in data:
                kwargs[key] = str(data[key])
        if "grid_spacing" in data:
            kwargs["grid_spacing"] = float(data["grid_spacing"])
        if "probe_counts" in data:
            kwargs["probe_counts"] = tuple(int(n) for n in data["probe_counts"])
        if "seed" in data:
            kwargs["seed"] = int(data["seed"])
        if "exact_probabilities" in data:
            kwargs["exact_probabilities"] = bool(data["exact_probabilities"])
        return ExperimentConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path=None) -> ExperimentConfig:
    """Read a JSON config file; None gives the built-in defaults."""
    if path is None:
        return ExperimentConfig()
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config document must be a JSON object")
    return config_from_dict(data)


def config_to_dict(config: ExperimentConfig) -> dict:
    """JSON-ready echo of a config (inverse of config_from_dict)."""
    coh = [
        [i, j, z.real] if z.imag == 0 else [i, j, z.real, z.imag]
        for i, j, z in config.true_state.coherences
    ]
    meas = config.measurement
    return {
        "dimension": config.dimension,
        "true_state": {"populations": list(config.true_state.populations), "coherences": coh},
        "measurement": {
            "phase_count": meas.phase_count,
            "bin_count": meas.bin_count,
            "quadrature_range": list(meas.quadrature_range),
            "efficiency": meas.efficiency,
            "shots_per_phase": meas.shots_per_phase,
        },
        "spiral": {
            "delta_r": config.spiral.delta_r,
            "delta_phi": config.spiral.delta_phi,
            "offset": config.spiral.offset,
        },
        "probe_layout": config.probe_layout,
        "grid_spacing": config.grid_spacing,
        "probe_counts": list(config.probe_counts),
        "solver": {
            "mu0": config.solver.mu0,
            "beta": config.solver.beta,
            "barrier_exponent": config.solver.barrier_exponent,
            "residual_tol": config.solver.residual_tol,
            "mu_tol": config.solver.mu_tol,
            "max_iterations": config.solver.max_iterations,
            "backtrack_factor": config.solver.backtrack_factor,
            "min_step": config.solver.min_step,
            "armijo_c": config.solver.armijo_c,
        },
        "seed": config.seed,
        "output_dir": config.output_dir,
        "exact_probabilities": config.exact_probabilities,
    }


# ---------------------------------------------------------------------------
# Wigner grids


@dataclass(frozen=True, eq=False)
class WignerGrid:
    """W sampled on a square grid of phase-space points re + i im."""

    re_values: np.ndarray
    im_values: np.ndarray
    values: np.ndarray  # (len(im_values), len(re_values))


def wigner_grid(rho: DensityMatrix, half_width: float, step: float) -> WignerGrid:
    """Evaluate W on [-half_width, half_width]^2 with the given step."""
    if step <= 0:
        raise ValueError("step must be positive")
    ticks = np.arange(-half_width, half_width + step / 2, step)
    alpha = ticks[None, :] + 1j * ticks[:, None]
    return WignerGrid(ticks, ticks, wigner_at(rho, alpha))


def write_wigner_grid_csv(grid: WignerGrid, path) -> None:
    """CSV rows (re_alpha, im_alpha, W)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["re_alpha", "im_alpha", "W"])
        for iy, im in enumerate(grid.im_values):
            for ix, re in enumerate(grid.re_values):
                writer.writerow([repr(float(re)), repr(float(im)), repr(float(grid.values[iy, ix]))])


# ---------------------------------------------------------------------------
# pipeline


@dataclass
class RunRecord:
    """Outcome of one reconstruction at a fixed probe count."""

    probes: int
    status: str
    fidelity: float | None = None
    w0: float | None = None
    purity: float | None = None
    iterations: int = 0
    wall_time: float = 0.0
    error: str | None = None


@dataclass
class RunReport:
    """All per-probe-count results of a study plus emitted artifact paths."""

    seed: int
    records: list[RunRecord] = field(default_factory=list)
    artifacts: dict[str, str] = field(default_factory=dict)

    def record_for(self, probes: int) -> RunRecord:
        for r in self.records:
            if r.probes == probes:
                return r
        raise KeyError(f"no record for {probes} probes")


def state_frequencies(
    rho: DensityMatrix, config: ExperimentConfig, seed_stream
) -> tuple[np.ndarray, Histogram | None]:
    """Per-phase-normalized response of one state: exact probabilities, or
    the relative frequencies of one sampled histogram."""
    povm = build_povm(config.measurement)
    probs = outcome_probabilities(rho, povm)
    if config.exact_probabilities:
        return probs, None
    hist = sample_histogram(
        probs.reshape(povm.phase_count, povm.bin_count),
        config.measurement.shots_per_phase,
        seed_stream,
    )
    return hist.frequencies.ravel(), hist


def _write_probes_csv(amplitudes: np.ndarray, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "re_alpha", "im_alpha"])
        for i, a in enumerate(amplitudes):
            writer.writerow([i, repr(float(a.real)), repr(float(a.imag))])


def _write_report_csv(records: list[RunRecord], path: Path) -> None:
    def fmt(v):
        return "" if v is None else repr(float(v))

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["probes", "fidelity", "w0", "purity", "status", "iterations"])
        for r in records:
            writer.writerow(
                [r.probes, fmt(r.fidelity), fmt(r.w0), fmt(r.purity), r.status, r.iterations]
            )


def _write_w0_csv(records: list[RunRecord], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["probes", "w0"])
        for r in records:
            if r.w0 is not None:
                writer.writerow([r.probes, repr(float(r.w0))])


def _write_manifest(path: Path, config: ExperimentConfig, extra: dict) -> None:
    import scipy

    manifest = {
        "config": config_to_dict(config),
        "versions": {
            "dptomo": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
    }
    manifest.update(extra)
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def simulate_histograms(config: ExperimentConfig, out_dir) -> dict[str, str]:
    """Emit signal and probe histograms (plus the probe table and manifest)
    for the largest configured probe count.  Returns artifact paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if config.exact_probabilities:
        raise ConfigError("simulate needs sampling; disable exact_probabilities")
    rho_true = config.true_state.to_density(config.dimension)
    n_max = config.probe_counts[-1]
    probes = config.probes(n_max)
    artifacts: dict[str, str] = {}

    _, signal_hist = state_frequencies(rho_true, config, (config.seed, 0))
    path = out / "signal.csv"
    write_histogram_csv(signal_hist, config.measurement, path)
    artifacts["signal"] = str(path)
    for xi in range(n_max):
        sigma = DensityMatrix(probes.projectors[xi])
        _, hist = state_frequencies(sigma, config, (config.seed, 1 + xi))
        path = out / f"probe_{xi:03d}.csv"
        write_histogram_csv(hist, config.measurement, path)
        artifacts[f"probe_{xi:03d}"] = str(path)
    _write_probes_csv(probes.amplitudes, out / "probes.csv")
    artifacts["probes"] = str(out / "probes.csv")
    _write_manifest(out / "manifest.json", config, {"artifacts": artifacts})
    artifacts["manifest"] = str(out / "manifest.json")
    return artifacts


def run_experiment(
    config: ExperimentConfig,
    out_dir=None,
    render_figures: bool = True,
) -> RunReport:
    """Full study: simulate (or use exact) responses, reconstruct at every
    configured probe count, and emit the report artifacts.

    A solver failure at one probe count is recorded and does not abort the
    remaining counts.
    """
    out = Path(out_dir if out_dir is not None else config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = RunReport(seed=config.seed)

    rho_true = config.true_state.to_density(config.dimension)
    n_max = config.probe_counts[-1]
    probes_full = config.probes(n_max)
    signal_freq, _ = state_frequencies(rho_true, config, (config.seed, 0))
    probe_freqs = np.empty((signal_freq.size, n_max))
    for xi in range(n_max):
        sigma = DensityMatrix(probes_full.projectors[xi])
        probe_freqs[:, xi], _ = state_frequencies(sigma, config, (config.seed, 1 + xi))

    _write_probes_csv(probes_full.amplitudes, out / "probes.csv")
    report.artifacts["probes"] = str(out / "probes.csv")
    true_grid = wigner_grid(rho_true, 3.0, 0.1)
    write_wigner_grid_csv(true_grid, out / "wigner_true.csv")
    report.artifacts["wigner_true"] = str(out / "wigner_true.csv")

    recon_grids: dict[int, WignerGrid] = {}
    traces: dict[int, ConvergenceTrace] = {}
    for n in config.probe_counts:
        started = time.perf_counter()
        try:
            result = solve(
                PatternMatrix.from_frequencies(
                    probe_freqs[:, :n], signal_freq, config.measurement.phase_count
                ),
                probes_full.prefix(n),
                config.solver,
            )
        except (InfeasibleStartError, SingularSystemError) as exc:
            report.records.append(
                RunRecord(probes=n, status="failed", error=str(exc),
                          wall_time=time.perf_counter() - started)
            )
            continue
        rec = RunRecord(
            probes=n,
            status=result.status.value,
            fidelity=fidelity(rho_true, result.rho),
            w0=wigner_at(result.rho, 0.0),
            purity=purity(result.rho),
            iterations=result.iterations,
            wall_time=time.perf_counter() - started,
        )
        report.records.append(rec)
        grid = wigner_grid(result.rho, 3.0, 0.1)
        recon_grids[n] = grid
        traces[n] = result.trace
        write_wigner_grid_csv(grid, out / f"wigner_{n:03d}.csv")
        result.trace.to_csv(out / f"trace_{n:03d}.csv")
        report.artifacts[f"wigner_{n:03d}"] = str(out / f"wigner_{n:03d}.csv")
        report.artifacts[f"trace_{n:03d}"] = str(out / f"trace_{n:03d}.csv")

    _write_report_csv(report.records, out / "report.csv")
    _write_w0_csv(report.records, out / "w0_vs_probes.csv")
    report.artifacts["report"] = str(out / "report.csv")
    report.artifacts["w0_vs_probes"] = str(out / "w0_vs_probes.csv")

    if render_figures:
        from . import figures

        marked = [n for n in config.probe_counts]
        figures.render_probe_layout(
            probes_full.amplitudes, true_grid, marked, out / "probes.png"
        )
        report.artifacts["probes_figure"] = str(out / "probes.png")
        if recon_grids:
            figures.render_wigner_comparison(true_grid, recon_grids, out / "wigner.png")
            report.artifacts["wigner_figure"] = str(out / "wigner.png")
        done = [r for r in report.records if r.w0 is not None]
        if done:
            figures.render_w0_curve(
                [r.probes for r in done],
                [r.w0 for r in done],
                wigner_at(rho_true, 0.0),
                out / "w0_vs_probes.png",
            )
            report.artifacts["w0_figure"] = str(out / "w0_vs_probes.png")
        if traces:
            figures.render_convergence(traces, out / "convergence.png")
            report.artifacts["convergence_figure"] = str(out / "convergence.png")

    timings = {
        str(r.probes): {"status": r.status, "iterations": r.iterations,
                        "wall_time_s": round(r.wall_time, 3), "error": r.error}
        for r in report.records
    }
    _write_manifest(out / "manifest.json", config,
                    {"runs": timings, "artifacts": report.artifacts})
    report.artifacts["manifest"] = str(out / "manifest.json")
    return report


@dataclass
class SweepRecord:
    gamma: float
    purity: float
    mean_fidelity: float
    std_fidelity: float
    fidelities: list[float] = field(default_factory=list)


def sweep_purity(
    config: ExperimentConfig,
    gammas,
    runs_per_gamma: int,
    out_dir=None,
    render_figures: bool = True,
) -> list[SweepRecord]:
    """Reconstruction fidelity for the state family
    0.5|0><0| + 0.5|1><1| + gamma(|0><1| + |1><0|), gamma in [0, 0.5].

    Each repetition resamples signal and probe histograms with independent
    derived seeds; the probe count is the largest configured one.  Emits
    purity_sweep.csv with (gamma, purity, mean_fidelity, std_fidelity).
    """
    gammas = [float(g) for g in gammas]
    for g in gammas:
        if g < 0 or g > 0.5:
            raise NotPSDError(f"gamma = {g:g} leaves the PSD family [0, 0.5]")
    if runs_per_gamma < 1:
        raise ValueError("runs_per_gamma must be >= 1")
    out = Path(out_dir if out_dir is not None else config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    n = config.probe_counts[-1]
    probes = config.probes(n)
    results: list[SweepRecord] = []
    for gi, gamma in enumerate(gammas):
        spec = StateSpec(populations=(0.5, 0.5), coherences=((0, 1, complex(gamma)),))
        rho_true = spec.to_density(config.dimension)
        fids = []
        for run in range(runs_per_gamma):
            run_cfg = replace(config, true_state=spec)
            signal_freq, _ = state_frequencies(rho_true, run_cfg, (config.seed, gi, run, 0))
            table = np.empty((signal_freq.size, n))
            for xi in range(n):
                sigma = DensityMatrix(probes.projectors[xi])
                table[:, xi], _ = state_frequencies(
                    sigma, run_cfg, (config.seed, gi, run, 1 + xi)
                )
            result = solve(
                PatternMatrix.from_frequencies(
                    table, signal_freq, config.measurement.phase_count
                ),
                probes,
                config.solver,
            )
            fids.append(fidelity(rho_true, result.rho))
        results.append(
            SweepRecord(
                gamma=gamma,
                purity=purity(rho_true),
                mean_fidelity=float(np.mean(fids)),
                std_fidelity=float(np.std(fids, ddof=1)) if len(fids) > 1 else 0.0,
                fidelities=fids,
            )
        )
    path = out / "purity_sweep.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["gamma", "purity", "mean_fidelity", "std_fidelity"])
        for r in results:
            writer.writerow([repr(r.gamma), repr(r.purity),
                             repr(r.mean_fidelity), repr(r.std_fidelity)])
    if render_figures:
        from . import figures

        figures.render_purity_sweep(
            [r.purity for r in results],
            [r.mean_fidelity for r in results],
            [r.std_fidelity for r in results],
            out / "purity_sweep.png",
        )
    _write_manifest(out / "manifest.json", config, {
        "gammas": gammas,
        "runs_per_gamma": runs_per_gamma,
        "artifacts": {"purity_sweep": str(path)},
    })
    return results


__all__ = [
    "ConfigError",
    "DEFAULT_PROBE_COUNTS",
    "ExperimentConfig",
    "RunRecord",
    "RunReport",
    "SpiralParams",
    "StateSpec",
    "SweepRecord",
    "WignerGrid",
    "config_from_dict",
    "config_to_dict",
    "grid_amplitudes",
    "load_config",
    "run_experiment",
    "simulate_histograms",
    "spiral_amplitudes",
    "spiral_probes",
    "state_frequencies",
    "sweep_purity",
    "wigner_grid",
    "write_wigner_grid_csv",
]
