"""Primal-dual interior-point solver for positivity-constrained pattern fits.

Minimizes the square-distance objective F(x) subject to rho(x) >= 0, where
rho(x) is the trace-one probe mixture.  Positivity enters through the
scalar constraint c(x) = det(rho(x))^m for rho(x) PSD and 0 otherwise,
with exponent 0 < m < 1 (default 1/d) taming the tiny determinants that
appear near rank-deficient optima.  The perturbed complementarity
lambda c(x) = mu biases the search away from the PSD boundary; mu is
driven to zero across outer iterations.

One outer iteration performs a single Newton solve of the stationarity and
complementarity equations at fixed mu (one inner iteration per outer
iteration), a feasibility-preserving backtracking line search, and the
barrier update mu <- beta lambda' c(x').

Cost per iteration is dominated by assembling the predicted response and
objective gradient, O(N M), when outcomes vastly outnumber probes; by
building the constraint curvature, O(N d^3 + N^2 d^2), when N < d^2; and
by the dense (N x N) Newton solve, O(N^3), when N >= d^2.  Since at most
M - 1 normalized patterns are linearly independent, configurations keep
N < M.
"""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field

import numpy as np

from .patterns import (
    PatternMatrix,
    ProbeSet,
    _mixture_matrix,
    objective_and_gradient,
    objective_hessian,
)
from .quantum import DensityMatrix

#: rho(x) counts as strictly positive-definite above this eigenvalue floor
PD_FLOOR = 1e-14
#: fraction-to-boundary safeguard: one accepted step may shrink the
#: constraint value at most by this factor.  Without it, early iterates can
#: collapse onto the PSD boundary where the constraint derivatives are pure
#: round-off and the Newton directions stop making progress.
BOUNDARY_FRACTION = 0.01
#: eigenvalues below this times the largest one get a refinement pass
SMALL_CLUSTER_REL = 1e-11

_EXTENDED = np.clongdouble if np.finfo(np.clongdouble).eps < 1e-17 else None


def _spectrum(rho: np.ndarray, rho_ext: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Eigensystem of a Hermitian matrix with the near-null cluster refined.

    LAPACK resolves eigenvalues only to ~eps * |A|, which turns the barrier
    derivatives into round-off noise once iterates approach the PSD
    boundary.  The invariant subspace of the small cluster is accurate to
    ~eps/gap, so re-forming that block in extended precision and
    rediagonalizing it scaled recovers the small eigenvalues down to the
    rounding floor of the matrix entries; passing the mixture accumulated
    in extended precision (rho_ext) lowers that floor further.
    """
    w, v = np.linalg.eigh(rho)
    if _EXTENDED is None:
        return w, v
    q = int(np.searchsorted(w, SMALL_CLUSTER_REL * abs(w[-1])))
    if q == 0 or q >= len(w):
        return w, v
    sub = v[:, :q].astype(_EXTENDED)
    full = rho.astype(_EXTENDED) if rho_ext is None else rho_ext
    block = sub.conj().T @ full @ sub
    block = 0.5 * (block + block.conj().T)
    scale = np.abs(block).max()
    if scale == 0.0:
        return w, v
    ws, us = np.linalg.eigh((block / scale).astype(complex))
    w = w.copy()
    v = v.copy()
    w[:q] = ws * float(scale)
    v[:, :q] = (sub @ us.astype(_EXTENDED)).astype(complex)
    order = np.argsort(w)
    return w[order], v[:, order]


class BoundaryError(RuntimeError):
    """Constraint derivatives requested at a rank-deficient point."""


class SingularSystemError(RuntimeError):
    """The Newton system stayed singular through all regularization levels."""


class StepStalledError(RuntimeError):
    """Backtracking reduced the step below min_step without acceptance."""


class InfeasibleStartError(RuntimeError):
    """The uniform probe mixture is singular, so no interior start exists."""


class SolverStatus(enum.Enum):
    CONVERGED = "converged"
    MAX_ITERATIONS = "max_iterations"
    STALLED = "stalled"


@dataclass(frozen=True)
class SolverOptions:
    """Tuning knobs; defaults reproduce the reference configuration."""

    mu0: float = 0.01
    beta: float = 0.1
    barrier_exponent: float | None = None  # None selects 1/d at solve time
    residual_tol: float = 1e-8
    mu_tol: float = 1e-10
    max_iterations: int = 500
    backtrack_factor: float = 0.5
    min_step: float = 1e-12
    armijo_c: float = 1e-4

    def __post_init__(self) -> None:
        if self.mu0 < 0:
            raise ValueError("mu0 must be >= 0")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must be in [0, 1]")
        if self.barrier_exponent is not None and not 0.0 < self.barrier_exponent < 1.0:
            raise ValueError("barrier_exponent must be in (0, 1)")
        for name in ("residual_tol", "mu_tol", "min_step", "armijo_c"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 < self.backtrack_factor < 1.0:
            raise ValueError("backtrack_factor must be in (0, 1)")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")

    def exponent_for(self, dim: int) -> float:
        return self.barrier_exponent if self.barrier_exponent is not None else 1.0 / dim


@dataclass
class SolverState:
    """One interior iterate with its cached derivatives.

    ``residual`` is the KKT residual at (x, lam) for the current mu.
    Accepted states always satisfy min_eig > 0 and lam >= 0.
    """

    x: np.ndarray
    lam: float
    mu: float
    m: float
    c: float
    J: np.ndarray
    B: np.ndarray
    g: np.ndarray
    objective: float
    rho_matrix: np.ndarray
    min_eig: float
    residual: float


@dataclass
class TraceRecord:
    iteration: int
    objective: float
    residual: float
    mu: float
    step: float
    constraint: float
    min_eigenvalue: float


@dataclass
class ConvergenceTrace:
    """Append-only per-iteration log of one solve."""

    records: list[TraceRecord] = field(default_factory=list)

    def append(self, record: TraceRecord) -> None:
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def to_csv(self, path) -> None:
        """Columns (k, F, log10_residual, mu, alpha, c, min_eig)."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["k", "F", "log10_residual", "mu", "alpha", "c", "min_eig"])
            for r in self.records:
                writer.writerow(
                    [r.iteration,
                     repr(r.objective),
                     repr(float(np.log10(max(r.residual, 1e-300)))),
                     repr(r.mu),
                     repr(r.step),
                     repr(r.constraint),
                     repr(r.min_eigenvalue)]
                )


@dataclass
class SolveResult:
    x: np.ndarray
    rho: DensityMatrix
    status: SolverStatus
    trace: ConvergenceTrace
    objective: float
    residual: float
    multiplier: float

    @property
    def iterations(self) -> int:
        return len(self.trace)


def constraint_value(rho: DensityMatrix, m: float) -> float:
    """c = det(rho)^m when rho is PSD (eigenvalues >= -1e-12, tiny negatives
    clamped to zero), and 0 otherwise."""
    if not 0.0 < m < 1.0:
        raise ValueError("m must be in (0, 1)")
    w, _ = _spectrum(np.asarray(rho.matrix))
    if w[0] < -1e-12:
        return 0.0
    w = np.clip(w, 0.0, None)
    if (w == 0.0).any():
        return 0.0
    return float(np.exp(m * np.log(w).sum()))


def _constraint_terms(
    eigenvalues: np.ndarray,
    eigenvectors: np.ndarray,
    deltas: np.ndarray,
    m: float,
) -> tuple[float, np.ndarray, np.ndarray]:
    """(c, J, B) from the spectrum of a strictly PD rho(x).

    With Gamma_i = rho^{-1} (sigma_i - sigma_N):
    J_i = m c tr(Gamma_i) and
    B_ij = J_i J_j / c - m c tr(Gamma_i Gamma_j).
    """
    c = float(np.exp(m * np.log(eigenvalues).sum()))
    inv = (eigenvectors / eigenvalues) @ eigenvectors.conj().T
    gammas = np.einsum("ab,ibc->iac", inv, deltas)
    tr = np.einsum("iaa->i", gammas).real
    pair = np.einsum("iab,jba->ij", gammas, gammas, optimize=True).real
    jac = m * c * tr
    hess = m * c * (m * np.outer(tr, tr) - pair)
    hess = 0.5 * (hess + hess.T)
    return c, jac, hess


def constraint_derivatives(
    x: np.ndarray, probes: ProbeSet, m: float
) -> tuple[float, np.ndarray, np.ndarray]:
    """Value, gradient and Hessian of the determinant-power constraint.

    Requires rho(x) strictly positive definite; raises BoundaryError at or
    beyond the PSD boundary where the derivatives do not exist.
    """
    if not 0.0 < m < 1.0:
        raise ValueError("m must be in (0, 1)")
    rho = _mixture_matrix(x, probes)
    w, v = _spectrum(rho)
    if w[0] <= PD_FLOOR:
        raise BoundaryError(
            f"rho(x) has minimum eigenvalue {w[0]:.3e}; derivatives need a "
            "strictly interior point"
        )
    return _constraint_terms(w, v, probes.deltas, m)


def kkt_residual(g: np.ndarray, J: np.ndarray, c: float, lam: float, mu: float) -> float:
    """Euclidean norm of the stacked stationarity and complementarity
    violations (g - lambda J, lambda c - mu)."""
    return float(np.linalg.norm(np.append(g - lam * J, lam * c - mu)))


def newton_step(
    H: np.ndarray, J: np.ndarray, c: float, lam: float, g: np.ndarray, mu: float
) -> tuple[np.ndarray, float]:
    """Solve the primal-dual Newton system

        [ H        -J^T ] [ dx  ]   [ -g + lambda J ]
        [ lambda J   c  ] [ dlam] = [ mu - lambda c ]

    where H is the Lagrangian Hessian.  A singular factorization is retried
    with H + delta I, delta escalating from 1e-12 (1 + max|H|) by factors
    of 10 up to 1e-6 (1 + max|H|).
    """
    n = len(g)
    rhs = np.append(-g + lam * J, mu - lam * c)
    scale = 1.0 + np.abs(H).max() if n else 1.0
    system = np.zeros((n + 1, n + 1))
    system[:n, n] = -J
    system[n, :n] = lam * J
    system[n, n] = c
    for eps in (0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6):
        system[:n, :n] = H + (eps * scale) * np.eye(n) if eps else H
        try:
            sol = np.linalg.solve(system, rhs)
        except np.linalg.LinAlgError:
            continue
        if np.isfinite(sol).all():
            return sol[:n], float(sol[n])
    raise SingularSystemError(
        f"Newton system singular after regularization up to {1e-6 * scale:.3e}"
    )


def _evaluate(
    x: np.ndarray,
    lam: float,
    mu: float,
    probes: ProbeSet,
    patterns: PatternMatrix,
    m: float,
) -> SolverState:
    """Build a fully cached state; raises BoundaryError off the interior.

    Any numerically positive spectrum is accepted here (the line-search
    feasibility test is min eigenvalue > 0): uniform mixtures of
    near-origin coherent probes are legitimately rank-deficient to working
    precision, and the barrier immediately lifts them off the boundary.
    """
    rho = _mixture_matrix(x, probes)
    w, v = _spectrum(rho)
    if w[0] <= 0.0:
        raise BoundaryError(f"rho(x) minimum eigenvalue {w[0]:.3e} not positive")
    c, jac, hess = _constraint_terms(w, v, probes.deltas, m)
    objective, g = objective_and_gradient(x, patterns)
    return SolverState(
        x=x,
        lam=lam,
        mu=mu,
        m=m,
        c=c,
        J=jac,
        B=hess,
        g=g,
        objective=objective,
        rho_matrix=rho,
        min_eig=float(w[0]),
        residual=kkt_residual(g, jac, c, lam, mu),
    )


def line_search(
    state: SolverState,
    dx: np.ndarray,
    dlambda: float,
    probes: ProbeSet,
    patterns: PatternMatrix,
    options: SolverOptions,
) -> tuple[float, SolverState]:
    """Backtrack alpha from 1 until the trial point is strictly feasible
    (rho(x') positive definite, lambda' >= 0) and the KKT residual at the
    current mu satisfies the sufficient decrease
    residual' <= (1 - armijo_c alpha) residual.

    A step is also rejected when it shrinks the constraint value below
    BOUNDARY_FRACTION times its current value, so no single step can land
    on the PSD boundary.  Raises StepStalledError once alpha falls below
    min_step.
    """
    if not np.any(dx) and dlambda == 0.0:
        return 1.0, state  # exact stationary point; nothing to move
    alpha = 1.0
    while alpha >= options.min_step:
        lam_new = state.lam + alpha * dlambda
        if lam_new >= 0.0:
            try:
                trial = _evaluate(
                    state.x + alpha * dx, lam_new, state.mu, probes, patterns, state.m
                )
            except BoundaryError:
                trial = None
            if (
                trial is not None
                and trial.c >= BOUNDARY_FRACTION * state.c
                and trial.residual <= (1.0 - options.armijo_c * alpha) * state.residual
            ):
                return alpha, trial
        alpha *= options.backtrack_factor
    raise StepStalledError(
        f"no acceptable step above {options.min_step:g} "
        f"(residual {state.residual:.3e}, min_eig {state.min_eig:.3e}, "
        f"|dx| {np.abs(dx).max():.3e}, dlambda {dlambda:.3e})"
    )


def solve(
    patterns: PatternMatrix,
    probes: ProbeSet,
    options: SolverOptions | None = None,
) -> SolveResult:
    """Run the outer loop to convergence, iteration cap, or stall.

    Starts from the uniform mixture x_i = 1/N with lambda = mu0 / c(x).
    Each iteration solves one Newton system, line-searches, then updates
    mu <- beta lambda' c(x').  Converged means the KKT residual is at most
    residual_tol and mu at most mu_tol.  Every accepted iterate is strictly
    feasible, so the returned state is physical up to round-off.
    """
    opts = options or SolverOptions()
    m = opts.exponent_for(probes.dim)
    n_free = probes.n_probes - 1
    x = np.full(n_free, 1.0 / probes.n_probes)
    hess_obj = objective_hessian(patterns)
    try:
        state = _evaluate(x, 0.0, opts.mu0, probes, patterns, m)
    except BoundaryError as exc:
        raise InfeasibleStartError(
            "uniform probe mixture is singular; enlarge or diversify the "
            "probe set so it spans the reconstruction space"
        ) from exc
    state.lam = opts.mu0 / state.c
    state.residual = kkt_residual(state.g, state.J, state.c, state.lam, state.mu)
    mu_floor = min(opts.mu_tol, opts.mu0)

    trace = ConvergenceTrace()
    status = SolverStatus.MAX_ITERATIONS
    recentered = False
    for k in range(1, opts.max_iterations + 1):
        if state.residual <= opts.residual_tol and state.mu <= opts.mu_tol:
            status = SolverStatus.CONVERGED
            break
        lagrangian_hessian = hess_obj - state.lam * state.B
        dx, dlam = newton_step(
            lagrangian_hessian, state.J, state.c, state.lam, state.g, state.mu
        )
        try:
            alpha, state = line_search(state, dx, dlam, probes, patterns, opts)
        except StepStalledError:
            # the barrier schedule outran the iterate (it happens when the
            # path hugs the PSD boundary); back mu off one schedule step and
            # recenter the dual before declaring a stall
            if recentered and state.mu >= opts.mu0:
                status = SolverStatus.STALLED
                break
            recentered = state.mu >= opts.mu0
            state.mu = min(state.mu / opts.beta, opts.mu0) if opts.beta > 0 else opts.mu0
            state.lam = state.mu / state.c
            state.residual = kkt_residual(state.g, state.J, state.c, state.lam, state.mu)
            trace.append(
                TraceRecord(k, state.objective, state.residual, state.mu,
                            0.0, state.c, state.min_eig)
            )
            continue
        recentered = False
        slack = state.lam * state.c
        if slack > 0.0:
            # mu parks at the termination floor instead of shrinking further:
            # fixed-mu Newton polishing drives the KKT residual to round-off,
            # whereas an ever-shrinking mu chases eigenvalues of rho below
            # the accuracy of the constraint derivatives
            state.mu = max(opts.beta * slack, mu_floor)
        else:
            # boundary touch: lambda' hit zero; keep mu moving instead of freezing
            state.mu = max(opts.beta * state.mu * 0.1, opts.mu_tol)
        state.residual = kkt_residual(state.g, state.J, state.c, state.lam, state.mu)
        trace.append(
            TraceRecord(
                iteration=k,
                objective=state.objective,
                residual=state.residual,
                mu=state.mu,
                step=alpha,
                constraint=state.c,
                min_eigenvalue=state.min_eig,
            )
        )
    return SolveResult(
        x=state.x,
        rho=DensityMatrix(state.rho_matrix),
        status=status,
        trace=trace,
        objective=state.objective,
        residual=state.residual,
        multiplier=state.lam,
    )


__all__ = [
    "BoundaryError",
    "ConvergenceTrace",
    "InfeasibleStartError",
    "SingularSystemError",
    "SolveResult",
    "SolverOptions",
    "SolverState",
    "SolverStatus",
    "StepStalledError",
    "TraceRecord",
    "constraint_derivatives",
    "constraint_value",
    "kkt_residual",
    "line_search",
    "newton_step",
    "solve",
]
