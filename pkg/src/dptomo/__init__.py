"""Data-pattern quantum-state tomography.

Reconstructs a density matrix as a weighted mixture of known coherent
probe responses by solving a positivity-constrained least-squares problem
with a primal-dual interior-point method, and simulates the lossy binned
homodyne detection used to generate the data.
"""
from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("dptomo")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.0.0+source"

from .quantum import (  # noqa: E402
    DensityMatrix,
    EigenDecomposition,
    NotHermitianError,
    NotPSDError,
    TraceError,
    coherent_ket,
    eig_hermitian,
    fidelity,
    fock_mixture,
    purity,
    wigner_at,
)
from .homodyne import (  # noqa: E402
    Histogram,
    MeasurementConfig,
    NegativeProbabilityError,
    POVMSet,
    QuadratureError,
    build_povm,
    outcome_probabilities,
    quadrature_wavefunction,
    sample_histogram,
)
from .patterns import (  # noqa: E402
    PatternMatrix,
    ProbeSet,
    ShapeMismatchError,
    build_patterns,
    full_weights,
    objective_and_gradient,
    objective_hessian,
    predicted_frequencies,
    rho_from_x,
)
from .solver import (  # noqa: E402
    BoundaryError,
    ConvergenceTrace,
    InfeasibleStartError,
    SingularSystemError,
    SolveResult,
    SolverOptions,
    SolverStatus,
    StepStalledError,
    constraint_derivatives,
    constraint_value,
    kkt_residual,
    line_search,
    newton_step,
    solve,
)
from .experiment import (  # noqa: E402
    ExperimentConfig,
    RunReport,
    SpiralParams,
    StateSpec,
    load_config,
    run_experiment,
    spiral_probes,
    sweep_purity,
    wigner_grid,
)

__all__ = [
    "BoundaryError",
    "ConvergenceTrace",
    "DensityMatrix",
    "EigenDecomposition",
    "ExperimentConfig",
    "Histogram",
    "InfeasibleStartError",
    "MeasurementConfig",
    "NegativeProbabilityError",
    "NotHermitianError",
    "NotPSDError",
    "POVMSet",
    "PatternMatrix",
    "ProbeSet",
    "QuadratureError",
    "RunReport",
    "ShapeMismatchError",
    "SingularSystemError",
    "SolveResult",
    "SolverOptions",
    "SolverStatus",
    "SpiralParams",
    "StateSpec",
    "StepStalledError",
    "TraceError",
    "__version__",
    "build_patterns",
    "build_povm",
    "coherent_ket",
    "constraint_derivatives",
    "constraint_value",
    "eig_hermitian",
    "fidelity",
    "fock_mixture",
    "full_weights",
    "kkt_residual",
    "line_search",
    "load_config",
    "newton_step",
    "objective_and_gradient",
    "objective_hessian",
    "outcome_probabilities",
    "predicted_frequencies",
    "purity",
    "quadrature_wavefunction",
    "rho_from_x",
    "run_experiment",
    "sample_histogram",
    "solve",
    "spiral_probes",
    "sweep_purity",
    "wigner_at",
    "wigner_grid",
]
