"""Quantum states and phase-space tools in a truncated Fock basis.

All operators are dense complex numpy arrays indexed by photon number
0..d-1.  Conventions fixed here and reused by the rest of the package:

* eigenvalues are always reported in ascending order,
* eigenvalues in [-EIG_CLAMP, EIG_CLAMP] are treated as exact zeros before
  square roots, determinants and inverses,
* the Wigner function is scaled to twice the expectation value of the
  parity operator displaced to the evaluation point, so the vacuum gives
  W(0) = 2 and a single photon W(0) = -2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import eval_genlaguerre

#: entrywise Hermiticity tolerance enforced by DensityMatrix
HERMITIAN_ATOL = 1e-12
#: unit-trace tolerance enforced by DensityMatrix
TRACE_ATOL = 1e-12
#: |trace - 1| accepted by fock_mixture before rescaling to unit trace
MIXTURE_TRACE_ATOL = 1e-9
#: eigenvalues with magnitude below this are clamped to zero
EIG_CLAMP = 1e-12
#: eigenvalues below -PSD_ATOL mean the operator is genuinely indefinite
PSD_ATOL = 1e-8
#: Hermiticity tolerance accepted by eig_hermitian
EIG_HERMITIAN_ATOL = 1e-10


class TraceError(ValueError):
    """Operator trace is too far from one."""


class NotHermitianError(ValueError):
    """Matrix fails its Hermitian symmetry check."""


class NotPSDError(ValueError):
    """Operator has a significantly negative eigenvalue."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Hermitian unit-trace operator on the truncated Fock space.

    Positivity is deliberately not part of the invariant: optimizer
    iterates may be indefinite, and positivity is checked explicitly
    where it matters (fidelity, sampling, reported reconstructions).
    """

    matrix: np.ndarray

    def __post_init__(self) -> None:
        m = np.array(self.matrix, dtype=complex)  # owned copy
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"density matrix must be square, got shape {m.shape}")
        dev = np.abs(m - m.conj().T).max()
        if dev > HERMITIAN_ATOL:
            raise NotHermitianError(
                f"max |A - A^H| = {dev:.3e} exceeds {HERMITIAN_ATOL:g}"
            )
        tr = m.trace()
        if abs(tr - 1.0) > TRACE_ATOL:
            raise TraceError(f"trace = {tr:.17g}, expected 1 within {TRACE_ATOL:g}")
        object.__setattr__(self, "matrix", _readonly(m))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True, eq=False)
class EigenDecomposition:
    """Eigensystem of a Hermitian matrix.

    ``eigenvalues`` are real and ascending; column k of ``eigenvectors``
    is the unit eigenvector for ``eigenvalues[k]``.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def eig_hermitian(a: np.ndarray) -> EigenDecomposition:
    """Eigendecomposition of a Hermitian matrix, eigenvalues ascending.

    Raises NotHermitianError if ``max |A - A^H|`` exceeds 1e-10.
    """
    a = np.asarray(a, dtype=complex)
    dev = np.abs(a - a.conj().T).max()
    if dev > EIG_HERMITIAN_ATOL:
        raise NotHermitianError(
            f"max |A - A^H| = {dev:.3e} exceeds {EIG_HERMITIAN_ATOL:g}"
        )
    w, v = np.linalg.eigh(a)
    return EigenDecomposition(_readonly(w), _readonly(v))


def coherent_ket(alpha: complex, dim: int) -> np.ndarray:
    """Fock coefficients exp(-|a|^2/2) a^n / sqrt(n!) of a coherent state.

    The vector is deliberately not renormalized after truncation; the
    weight lost to truncation is ``1 - |ket|^2``.
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    ket = np.empty(dim, dtype=complex)
    ket[0] = math.exp(-0.5 * abs(alpha) ** 2)
    for n in range(1, dim):
        ket[n] = ket[n - 1] * alpha / math.sqrt(n)
    return ket


def fock_mixture(
    populations,
    coherences: dict[tuple[int, int], complex] | None = None,
    dim: int | None = None,
) -> DensityMatrix:
    """Density matrix with given Fock populations and optional coherences.

    ``coherences`` maps (i, j) with i < j to the amplitude z of the term
    z|i><j| + conj(z)|j><i|.  The trace must come out 1 within 1e-9; the
    matrix is then rescaled so the trace is exactly 1.
    """
    pops = np.atleast_1d(np.asarray(populations, dtype=float))
    coherences = coherences or {}
    needed = len(pops)
    for i, j in coherences:
        if not 0 <= i < j:
            raise ValueError(f"coherence index pair {(i, j)} must satisfy 0 <= i < j")
        needed = max(needed, j + 1)
    d = needed if dim is None else dim
    if d < needed:
        raise ValueError(f"dim={d} too small for populations/coherences up to index {needed - 1}")
    m = np.zeros((d, d), dtype=complex)
    m[np.arange(len(pops)), np.arange(len(pops))] = pops
    for (i, j), z in coherences.items():
        m[i, j] += z
        m[j, i] += np.conj(z)
    tr = m.trace().real
    if abs(tr - 1.0) > MIXTURE_TRACE_ATOL:
        raise TraceError(f"trace = {tr:.12g}, expected 1 within {MIXTURE_TRACE_ATOL:g}")
    return DensityMatrix(m / tr)


def _clamped_spectrum(rho: DensityMatrix) -> EigenDecomposition:
    """Spectrum with tiny eigenvalues clamped to zero; rejects indefinite input."""
    eig = eig_hermitian(rho.matrix)
    w = eig.eigenvalues
    if w[0] < -PSD_ATOL:
        raise NotPSDError(f"minimum eigenvalue {w[0]:.3e} below -{PSD_ATOL:g}")
    w = np.where(w < EIG_CLAMP, 0.0, w)
    return EigenDecomposition(w, eig.eigenvectors)


def fidelity(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    """Uhlmann fidelity Tr sqrt(sqrt(rho) sigma sqrt(rho)) in [0, 1]."""
    spec_r = _clamped_spectrum(rho)
    _clamped_spectrum(sigma)  # PSD check on the second argument
    v = spec_r.eigenvectors
    sqrt_r = (v * np.sqrt(spec_r.eigenvalues)) @ v.conj().T
    inner = sqrt_r @ sigma.matrix @ sqrt_r
    inner = 0.5 * (inner + inner.conj().T)
    w = np.linalg.eigvalsh(inner)
    return float(np.sqrt(np.clip(w, 0.0, None)).sum())


def purity(rho: DensityMatrix) -> float:
    """Tr(rho^2); 1 for pure states, 1/d for the maximally mixed state."""
    return float(np.vdot(rho.matrix, rho.matrix).real)


def _displacement_matrix(beta: np.ndarray, dim: int) -> np.ndarray:
    """Fock matrix elements <m|D(beta)|n> for every beta in the input array.

    Closed form via associated Laguerre polynomials: for m >= n,
    <m|D(b)|n> = sqrt(n!/m!) b^(m-n) exp(-|b|^2/2) L_n^(m-n)(|b|^2),
    and <n|D(b)|m> follows by replacing b^(m-n) with (-conj(b))^(m-n).
    Exact in the infinite-dimensional space; rows/columns are simply read
    off at the working dimension, so accuracy degrades for |b| >~ sqrt(d).
    """
    b = np.asarray(beta, dtype=complex)
    x = np.abs(b) ** 2
    pref = np.exp(-0.5 * x)
    out = np.empty(b.shape + (dim, dim), dtype=complex)
    for lo in range(dim):
        for hi in range(lo, dim):
            k = hi - lo
            # sqrt(hi!/lo!) = sqrt((lo+1)(lo+2)..hi)
            ratio = math.sqrt(math.prod(range(lo + 1, hi + 1)))
            lag = eval_genlaguerre(lo, k, x)
            out[..., hi, lo] = pref * (b**k) * lag / ratio
            if hi != lo:
                out[..., lo, hi] = pref * ((-b.conj()) ** k) * lag / ratio
    return out


def displaced_parity(alpha, dim: int) -> np.ndarray:
    """Matrix of D(alpha) P D(alpha)^+ with P the Fock parity operator.

    Uses the identity D(a) P D(-a) = D(2a) P, so the element (m, n) is
    <m|D(2a)|n> (-1)^n.
    """
    d2 = _displacement_matrix(2.0 * np.asarray(alpha, dtype=complex), dim)
    signs = (-1.0) ** np.arange(dim)
    return d2 * signs


def wigner_at(rho: DensityMatrix, alpha) -> float | np.ndarray:
    """W(alpha) = 2 Tr[rho D(alpha) P D(alpha)^+].

    Accepts a complex scalar or an array of phase-space points and returns
    a matching shape.  With this scaling W(0) = 2 sum_n (-1)^n rho_nn.
    """
    t = displaced_parity(alpha, rho.dim)
    w = 2.0 * np.einsum("nm,...mn->...", rho.matrix, t).real
    if np.isscalar(alpha) or np.ndim(alpha) == 0:
        return float(w)
    return w
