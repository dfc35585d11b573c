"""Binned, finite-efficiency homodyne measurement model in the Fock basis.

The ideal quadrature projector density at local-oscillator phase theta is
A_theta(y)_{mn} = exp(i(n-m) theta) psi_m(y) psi_n(y), with psi_n the
Hermite functions under the hbar = 1, vacuum-variance-1/2 convention.
Detector efficiency eta < 1 smears the statistics: an ideal quadrature
value y is recorded as x ~ Normal(sqrt(eta) y, (1-eta)/2), the exact
beam-splitter loss equivalence.  POVM elements integrate this density over
each outcome bin; outcomes are indexed l = phase_index * bin_count + bin.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.special import erf

from .quantum import DensityMatrix, _readonly

#: per-phase completeness residual allowed before build_povm rejects itself
COMPLETENESS_TOL = 1e-6

_GL_NODES_PER_BIN = 24      # eta = 1: Gauss-Legendre nodes on each bin
_GL_PANEL_WIDTH = 0.2       # eta < 1: composite panel width on the y axis
_GL_NODES_PER_PANEL = 12


class QuadratureError(RuntimeError):
    """Internal bin integration failed its completeness self-check."""


class NegativeProbabilityError(ValueError):
    """A probability input is negative beyond round-off."""


@dataclass(frozen=True)
class MeasurementConfig:
    """Discretized homodyne measurement: phases x quadrature bins."""

    dim: int
    phase_count: int = 6
    bin_count: int = 61
    quadrature_range: tuple[float, float] = (-6.0, 6.0)
    efficiency: float = 0.8
    shots_per_phase: int = 200_000

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.phase_count < 1:
            raise ValueError("phase_count must be >= 1")
        if self.bin_count < 2:
            raise ValueError("bin_count must be >= 2")
        lo, hi = self.quadrature_range
        if not lo < hi:
            raise ValueError("quadrature_range must satisfy x_min < x_max")
        if not 0.0 < self.efficiency <= 1.0:
            raise ValueError("efficiency must be in (0, 1]")
        if self.shots_per_phase < 0:
            raise ValueError("shots_per_phase must be >= 0")

    @property
    def n_outcomes(self) -> int:
        return self.phase_count * self.bin_count

    @property
    def bin_edges(self) -> np.ndarray:
        lo, hi = self.quadrature_range
        return np.linspace(lo, hi, self.bin_count + 1)

    @property
    def phases(self) -> np.ndarray:
        # theta_k = k pi / phase_count; the half circle is informationally
        # complete because x(theta + pi) = -x(theta)
        return np.arange(self.phase_count) * (np.pi / self.phase_count)


def hermite_functions(count: int, x: np.ndarray) -> np.ndarray:
    """psi_0..psi_{count-1} evaluated at x, stacked as rows.

    Stable three-term recurrence on the orthonormal Hermite functions:
    psi_0 = pi^(-1/4) exp(-x^2/2), psi_1 = sqrt(2) x psi_0,
    psi_{n+1} = sqrt(2/(n+1)) x psi_n - sqrt(n/(n+1)) psi_{n-1}.
    """
    x = np.asarray(x, dtype=float)
    out = np.empty((count, x.size), dtype=float)
    out[0] = np.pi ** -0.25 * np.exp(-0.5 * x**2)
    if count > 1:
        out[1] = np.sqrt(2.0) * x * out[0]
    for n in range(1, count - 1):
        out[n + 1] = np.sqrt(2.0 / (n + 1)) * x * out[n] - np.sqrt(n / (n + 1)) * out[n - 1]
    return out


def quadrature_wavefunction(n: int, x) -> float | np.ndarray:
    """<x|n> = H_n(x) exp(-x^2/2) / (pi^(1/4) sqrt(2^n n!))."""
    if n < 0:
        raise ValueError("n must be >= 0")
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    psi = hermite_functions(n + 1, arr)[n]
    if np.isscalar(x) or np.ndim(x) == 0:
        return float(psi[0])
    return psi.reshape(np.shape(x))


@dataclass(frozen=True, eq=False)
class POVMSet:
    """Ordered homodyne POVM; element l = phase_index * bin_count + bin."""

    config: MeasurementConfig
    elements: np.ndarray  # (M, d, d) complex, Hermitian, PSD

    @property
    def dim(self) -> int:
        return self.config.dim

    @property
    def n_outcomes(self) -> int:
        return self.elements.shape[0]

    @property
    def phase_count(self) -> int:
        return self.config.phase_count

    @property
    def bin_count(self) -> int:
        return self.config.bin_count

    def index(self, phase: int, bin_: int) -> int:
        return phase * self.config.bin_count + bin_


def _panel_nodes(lo: float, hi: float, panels: int, per_panel: int):
    """Composite Gauss-Legendre nodes/weights on [lo, hi]."""
    base_x, base_w = np.polynomial.legendre.leggauss(per_panel)
    edges = np.linspace(lo, hi, panels + 1)
    half = 0.5 * (edges[1:] - edges[:-1])
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * base_x[None, :]).ravel()
    weights = (half[:, None] * base_w[None, :]).ravel()
    return nodes, weights


def _bin_projector_integrals(config: MeasurementConfig) -> np.ndarray:
    """Phase-independent part of the POVM: integrals over each bin of the
    quadrature projector density, smeared by the loss kernel.  Shape
    (bin_count, d, d), real symmetric, PSD."""
    d = config.dim
    edges = config.bin_edges
    eta = config.efficiency
    if eta == 1.0:
        nodes = np.empty((config.bin_count, _GL_NODES_PER_BIN))
        weights = np.empty_like(nodes)
        base_x, base_w = np.polynomial.legendre.leggauss(_GL_NODES_PER_BIN)
        for b in range(config.bin_count):
            half = 0.5 * (edges[b + 1] - edges[b])
            nodes[b] = 0.5 * (edges[b] + edges[b + 1]) + half * base_x
            weights[b] = half * base_w
        psi = hermite_functions(d, nodes.ravel()).reshape(d, config.bin_count, -1)
        return np.einsum("mbk,nbk,bk->bmn", psi, psi, weights)
    # eta < 1: the x integral over each bin is analytic (Gaussian CDF
    # differences); only the y integral is numeric.  The y grid must cover
    # both the Fock-state support and the preimage of the bin range.
    root_eta = np.sqrt(eta)
    s = np.sqrt((1.0 - eta) / 2.0)
    reach = max(abs(edges[0]), abs(edges[-1])) / root_eta + 8.0 * s + 2.0
    half_width = max(reach, np.sqrt(2.0 * d + 1.0) + 6.0)
    panels = int(np.ceil(2.0 * half_width / _GL_PANEL_WIDTH))
    y, w = _panel_nodes(-half_width, half_width, panels, _GL_NODES_PER_PANEL)
    psi = hermite_functions(d, y)
    z = (edges[:, None] - root_eta * y[None, :]) / (s * np.sqrt(2.0))
    cdf = 0.5 * (1.0 + erf(z))
    gain = cdf[1:] - cdf[:-1]  # (bin_count, nodes): bin mass given ideal y
    return np.einsum("bk,mk,nk,k->bmn", gain, psi, psi, w, optimize=True)


@lru_cache(maxsize=16)
def build_povm(config: MeasurementConfig) -> POVMSet:
    """Construct the binned homodyne POVM for the given configuration.

    Raises QuadratureError when the per-phase completeness residual
    max |sum_bins Pi - I| exceeds 1e-6, which happens when the quadrature
    range clips non-negligible probability mass for dim Fock states.
    Results are cached per config; element arrays are read-only.
    """
    base = _bin_projector_integrals(config)
    d = config.dim
    residual = np.abs(base.sum(axis=0) - np.eye(d)).max()
    if residual > COMPLETENESS_TOL:
        raise QuadratureError(
            f"per-phase completeness residual {residual:.3e} exceeds "
            f"{COMPLETENESS_TOL:g}; widen the quadrature range or reduce dim"
        )
    n = np.arange(d)
    elements = np.empty((config.n_outcomes, d, d), dtype=complex)
    for t, theta in enumerate(config.phases):
        phase_factor = np.exp(1j * theta * (n[None, :] - n[:, None]))
        lo = t * config.bin_count
        elements[lo : lo + config.bin_count] = phase_factor[None, :, :] * base
    return POVMSet(config, _readonly(elements))


def outcome_probabilities(rho: DensityMatrix, povm: POVMSet) -> np.ndarray:
    """Born-rule probabilities Tr(Pi_l rho), flattened over (phase, bin).

    Negative round-off is clamped to zero and each phase block is
    renormalized to unit sum, absorbing the (negligible) mass outside the
    quadrature range.
    """
    p = np.einsum("lmn,nm->l", povm.elements, rho.matrix, optimize=True).real
    p = p.reshape(povm.phase_count, povm.bin_count)
    np.clip(p, 0.0, None, out=p)
    p /= p.sum(axis=1, keepdims=True)
    return p.ravel()


@dataclass(frozen=True, eq=False)
class Histogram:
    """Multinomial outcome counts, one row per phase."""

    counts: np.ndarray  # (phase_count, bin_count) nonnegative integers
    shots_per_phase: int

    def __post_init__(self) -> None:
        c = np.array(self.counts, dtype=np.int64)  # owned copy
        if c.ndim != 2:
            raise ValueError("counts must be a (phase_count, bin_count) array")
        if (c < 0).any():
            raise ValueError("counts must be nonnegative")
        sums = c.sum(axis=1)
        if (sums != self.shots_per_phase).any():
            raise ValueError(
                f"per-phase counts sum to {sums.tolist()}, expected "
                f"{self.shots_per_phase} in every phase"
            )
        object.__setattr__(self, "counts", _readonly(c))

    @property
    def phase_count(self) -> int:
        return self.counts.shape[0]

    @property
    def bin_count(self) -> int:
        return self.counts.shape[1]

    @property
    def frequencies(self) -> np.ndarray:
        """Relative frequencies per phase, (phase_count, bin_count)."""
        if self.shots_per_phase == 0:
            return np.zeros_like(self.counts, dtype=float)
        return self.counts / float(self.shots_per_phase)


def _phase_rng(seed, phase: int) -> np.random.Generator:
    """Generator for one phase stream.

    The seed may be an int or a tuple of ints; phase k draws from
    numpy's SeedSequence(entropy = (*seed, k)), so histograms for
    different phases (and different states, via distinct seed tuples)
    are independent and reproducible.
    """
    entropy = tuple(seed) if isinstance(seed, (tuple, list)) else (int(seed),)
    return np.random.default_rng(np.random.SeedSequence(entropy + (int(phase),)))


def sample_histogram(probs: np.ndarray, shots_per_phase: int, seed) -> Histogram:
    """Draw one independent multinomial per phase row of ``probs``.

    Deterministic for fixed (probs, shots, seed); see _phase_rng for the
    per-phase seed derivation.
    """
    p = np.asarray(probs, dtype=float)
    if p.ndim != 2:
        raise ValueError("probs must be a (phase_count, bin_count) array")
    if p.min() < -1e-9:
        raise NegativeProbabilityError(f"probability {p.min():.3e} below -1e-9")
    p = np.clip(p, 0.0, None)
    totals = p.sum(axis=1)
    if (totals <= 0).any():
        raise NegativeProbabilityError("a phase row has zero total probability")
    p = p / totals[:, None]
    counts = np.empty(p.shape, dtype=np.int64)
    for k in range(p.shape[0]):
        counts[k] = _phase_rng(seed, k).multinomial(shots_per_phase, p[k])
    return Histogram(counts, shots_per_phase)


def write_histogram_csv(hist: Histogram, config: MeasurementConfig, path) -> None:
    """CSV columns: phase_index, bin_index, x_left, x_right, count, frequency."""
    edges = config.bin_edges
    freq = hist.frequencies
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["phase_index", "bin_index", "x_left", "x_right", "count", "frequency"])
        for t in range(hist.phase_count):
            for b in range(hist.bin_count):
                writer.writerow(
                    [t, b, repr(float(edges[b])), repr(float(edges[b + 1])),
                     int(hist.counts[t, b]), repr(float(freq[t, b]))]
                )


def read_histogram_csv(path) -> Histogram:
    """Inverse of write_histogram_csv (x_left/x_right are ignored)."""
    rows = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append((int(row["phase_index"]), int(row["bin_index"]), int(row["count"])))
    if not rows:
        raise ValueError(f"empty histogram file: {path}")
    phases = 1 + max(r[0] for r in rows)
    bins = 1 + max(r[1] for r in rows)
    counts = np.zeros((phases, bins), dtype=np.int64)
    for t, b, c in rows:
        counts[t, b] = c
    shots = counts.sum(axis=1)
    if (shots != shots[0]).any():
        raise ValueError(f"inconsistent shots per phase in {path}")
    return Histogram(counts, int(shots[0]))


__all__ = [
    "COMPLETENESS_TOL",
    "Histogram",
    "MeasurementConfig",
    "NegativeProbabilityError",
    "POVMSet",
    "QuadratureError",
    "build_povm",
    "hermite_functions",
    "outcome_probabilities",
    "quadrature_wavefunction",
    "read_histogram_csv",
    "sample_histogram",
    "write_histogram_csv",
]
