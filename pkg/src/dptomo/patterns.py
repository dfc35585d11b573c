"""Data patterns: probe responses, weight-vector parameterization, and the
least-squares objective.

A signal state is expanded over N known probe states, rho(x) =
sum_xi x_xi sigma_xi with real (possibly negative) weights.  Unit trace is
eliminated by x_N = 1 - sum of the others, leaving the free weight vector
x in R^(N-1).  The measured response is fitted by the square distance
F(x) = sum_l (f_l - fhat_l)^2, where fhat is affine in x.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .homodyne import Histogram
from .quantum import DensityMatrix, _readonly, coherent_ket

#: per-phase frequency columns must sum to one within this tolerance
COLUMN_SUM_ATOL = 1e-12
#: probe amplitudes closer than this are considered duplicates
MIN_PROBE_SEPARATION = 1e-9


class ShapeMismatchError(ValueError):
    """Histograms or frequency tables have inconsistent outcome layouts."""


@dataclass(frozen=True, eq=False)
class ProbeSet:
    """Coherent probe states at a fixed truncation dimension.

    Kets are truncated coherent states renormalized to unit norm, so every
    projector has unit trace and rho_from_x keeps trace exactly one for any
    weight vector.  ``deltas`` holds sigma_i - sigma_N for i < N with the
    residual trace of each difference spread off the diagonal, keeping the
    affine trace identity robust even for large weights.
    """

    amplitudes: np.ndarray   # (N,) complex
    kets: np.ndarray         # (N, d) complex, unit norm
    projectors: np.ndarray   # (N, d, d) complex, Hermitian, unit trace
    deltas: np.ndarray       # (N-1, d, d) traceless differences

    @classmethod
    def from_amplitudes(cls, amplitudes, dim: int) -> "ProbeSet":
        alphas = np.atleast_1d(np.array(amplitudes, dtype=complex))  # owned copy
        n = len(alphas)
        if n < 2:
            raise ValueError("need at least two probe states")
        diff = np.abs(alphas[:, None] - alphas[None, :])
        min_sep = diff[~np.eye(n, dtype=bool)].min()
        if min_sep <= MIN_PROBE_SEPARATION:
            raise ValueError(
                f"probe amplitudes too close (min separation {min_sep:.3e})"
            )
        kets = np.empty((n, dim), dtype=complex)
        for i, a in enumerate(alphas):
            k = coherent_ket(a, dim)
            kets[i] = k / np.linalg.norm(k)
        projectors = np.einsum("im,in->imn", kets, kets.conj())
        deltas = projectors[:-1] - projectors[-1]
        # remove the O(eps) residual trace of each difference
        resid = np.einsum("iaa->i", deltas).real / dim
        deltas[:, np.arange(dim), np.arange(dim)] -= resid[:, None]
        return cls(_readonly(alphas), _readonly(kets), _readonly(projectors), _readonly(deltas))

    @property
    def n_probes(self) -> int:
        return len(self.amplitudes)

    @property
    def dim(self) -> int:
        return self.kets.shape[1]

    def prefix(self, n: int) -> "ProbeSet":
        """First n probes as a new set (the last probe changes, so the
        trace-eliminated parameterization is rebuilt)."""
        if not 2 <= n <= self.n_probes:
            raise ValueError(f"prefix size {n} out of range [2, {self.n_probes}]")
        return ProbeSet.from_amplitudes(self.amplitudes[:n], self.dim)


@dataclass(frozen=True, eq=False)
class PatternMatrix:
    """Probe frequency table, measured signal, and the reduced design matrix.

    ``design`` has columns f^(i) - f^(N) for i < N; it is derived from the
    frequency table at construction and never edited.
    """

    probe_frequencies: np.ndarray  # (M, N), column per probe
    signal: np.ndarray             # (M,)
    design: np.ndarray             # (M, N-1)
    phase_count: int

    @classmethod
    def from_frequencies(cls, probe_frequencies, signal, phase_count: int) -> "PatternMatrix":
        table = np.array(probe_frequencies, dtype=float)  # owned copy
        sig = np.array(signal, dtype=float)
        if table.ndim != 2 or sig.ndim != 1 or table.shape[0] != sig.shape[0]:
            raise ShapeMismatchError(
                f"probe table {table.shape} incompatible with signal {sig.shape}"
            )
        m = table.shape[0]
        if phase_count < 1 or m % phase_count:
            raise ShapeMismatchError(
                f"{m} outcomes do not split into {phase_count} phases"
            )
        col_sums = table.reshape(phase_count, -1, table.shape[1]).sum(axis=1)
        sig_sums = sig.reshape(phase_count, -1).sum(axis=1)
        if np.abs(col_sums - 1.0).max() > COLUMN_SUM_ATOL:
            raise ValueError("per-phase probe frequency sums deviate from 1")
        if np.abs(sig_sums - 1.0).max() > COLUMN_SUM_ATOL:
            raise ValueError("per-phase signal frequency sums deviate from 1")
        design = table[:, :-1] - table[:, -1:]
        return cls(_readonly(table), _readonly(sig), _readonly(design), phase_count)

    @property
    def n_outcomes(self) -> int:
        return self.signal.shape[0]

    @property
    def n_probes(self) -> int:
        return self.probe_frequencies.shape[1]


def build_patterns(probe_histograms: Sequence[Histogram], signal_histogram: Histogram) -> PatternMatrix:
    """Assemble a PatternMatrix from measured histograms.

    All histograms must share one measurement layout; frequencies (not
    counts) are used, so probe and signal shot counts may differ.
    """
    shape = signal_histogram.counts.shape
    for i, h in enumerate(probe_histograms):
        if h.counts.shape != shape:
            raise ShapeMismatchError(
                f"probe {i} histogram shape {h.counts.shape} != signal shape {shape}"
            )
    table = np.stack([h.frequencies.ravel() for h in probe_histograms], axis=1)
    return PatternMatrix.from_frequencies(
        table, signal_histogram.frequencies.ravel(), signal_histogram.phase_count
    )


def full_weights(x: np.ndarray) -> np.ndarray:
    """Append the implied last weight x_N = 1 - sum(x)."""
    x = np.asarray(x, dtype=float)
    return np.append(x, 1.0 - x.sum())


def _mixture_matrix(x: np.ndarray, probes: ProbeSet) -> np.ndarray:
    """Raw rho(x) = sigma_N + sum_i x_i (sigma_i - sigma_N).

    The exact expression has unit trace for any x; the summation round-off
    (which grows with |x|_1) is removed from the diagonal so the invariant
    holds at machine precision even for large weights.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (probes.n_probes - 1,):
        raise ValueError(f"expected {probes.n_probes - 1} free weights, got {x.shape}")
    m = probes.projectors[-1] + np.tensordot(x, probes.deltas, axes=1)
    d = m.shape[0]
    drift = (m.trace().real - 1.0) / d
    m[np.arange(d), np.arange(d)] -= drift
    return m


def rho_from_x(x: np.ndarray, probes: ProbeSet) -> DensityMatrix:
    """Probe mixture for the free weights x; unit trace by construction."""
    return DensityMatrix(_mixture_matrix(x, probes))


def predicted_frequencies(x: np.ndarray, patterns: PatternMatrix) -> np.ndarray:
    """fhat = f^(N) + A x, the affine response model."""
    x = np.asarray(x, dtype=float)
    return patterns.probe_frequencies[:, -1] + patterns.design @ x


def objective_and_gradient(x: np.ndarray, patterns: PatternMatrix) -> tuple[float, np.ndarray]:
    """Square distance F = |f - fhat|^2 and its gradient -2 A^T (f - fhat)."""
    r = patterns.signal - predicted_frequencies(x, patterns)
    return float(r @ r), -2.0 * (patterns.design.T @ r)


def objective_hessian(patterns: PatternMatrix) -> np.ndarray:
    """Constant objective Hessian 2 A^T A (PSD Gram matrix)."""
    return 2.0 * (patterns.design.T @ patterns.design)


def write_patterns_csv(patterns: PatternMatrix, path) -> None:
    """One column per probe plus the signal column, one row per outcome."""
    header = [f"probe_{i:03d}" for i in range(patterns.n_probes)] + ["signal"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for l in range(patterns.n_outcomes):
            row = [repr(float(v)) for v in patterns.probe_frequencies[l]]
            row.append(repr(float(patterns.signal[l])))
            writer.writerow(row)


__all__ = [
    "PatternMatrix",
    "ProbeSet",
    "ShapeMismatchError",
    "build_patterns",
    "full_weights",
    "objective_and_gradient",
    "objective_hessian",
    "predicted_frequencies",
    "rho_from_x",
    "write_patterns_csv",
]
