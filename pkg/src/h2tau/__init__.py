"""H2 norms and H2-optimal design for delay differential algebraic systems.

The package discretizes semi-explicit delay DAEs with a Legendre tau scheme,
reduces the discretization to an ODE whenever the strong H2 norm is finite,
and exposes the norm, its gradients with respect to system parameters and
delays, and a BFGS driver for parameter synthesis.
"""

from .errors import (
    CharacteristicRootError,
    DefectiveEigenproblemError,
    DelayOrderingError,
    DifferentiationIndexError,
    FeedthroughError,
    H2TauError,
    LyapunovError,
    ModelInputError,
    NotStronglyStableError,
    OracleDivergenceError,
    ReductionError,
    UnstableError,
)
from .orthopoly import (
    BasisSpec,
    derivative_matrix,
    derivative_matrix_1d,
    deriv_row,
    eval_functional,
    eval_row,
    truncation_matrix,
)
from .model import (
    DdaeSystem,
    ParameterBinding,
    apply_parameters,
    build_example,
    dump_system,
    extract_parameters,
    list_examples,
    load_system,
    system_from_dict,
    system_to_dict,
    transfer,
    with_values,
)
from .discretization import (
    TauDiscretization,
    discretize,
    discretized_transfer,
    rational_exp,
    rational_transfer,
)
from .reduction import (
    IndexReport,
    ReducedOde,
    StandardForm,
    index_check,
    split_and_reduce,
    standard_form,
)
from .diagnostics import (
    DiagnosticsReport,
    FeedthroughReport,
    essential_radius,
    feedthrough_family_test,
    matrix_power_sums,
    nominal_abscissa,
    run_diagnostics,
)
from .h2core import (
    ConvergenceStudy,
    H2Result,
    compute_h2,
    convergence_study,
    h2_norm,
    h2_quadrature_oracle,
    lyapunov_solve,
    study_to_csv,
)
from .sensitivity import FdReport, GradientBundle, fd_check, gradient
from .synthesis import (
    SynthesisConfig,
    SynthesisResult,
    SynthesisTrace,
    objective,
    synthesize,
    trace_to_csv,
)

__version__ = "0.1.0"

__all__ = [
    "BasisSpec",
    "CharacteristicRootError",
    "ConvergenceStudy",
    "DdaeSystem",
    "DefectiveEigenproblemError",
    "DelayOrderingError",
    "DiagnosticsReport",
    "DifferentiationIndexError",
    "FdReport",
    "FeedthroughError",
    "FeedthroughReport",
    "GradientBundle",
    "H2Result",
    "H2TauError",
    "IndexReport",
    "LyapunovError",
    "ModelInputError",
    "NotStronglyStableError",
    "OracleDivergenceError",
    "ParameterBinding",
    "ReducedOde",
    "ReductionError",
    "StandardForm",
    "SynthesisConfig",
    "SynthesisResult",
    "SynthesisTrace",
    "TauDiscretization",
    "UnstableError",
    "apply_parameters",
    "build_example",
    "compute_h2",
    "convergence_study",
    "deriv_row",
    "derivative_matrix",
    "derivative_matrix_1d",
    "discretize",
    "discretized_transfer",
    "dump_system",
    "essential_radius",
    "eval_functional",
    "eval_row",
    "extract_parameters",
    "fd_check",
    "feedthrough_family_test",
    "gradient",
    "h2_norm",
    "h2_quadrature_oracle",
    "index_check",
    "list_examples",
    "load_system",
    "lyapunov_solve",
    "matrix_power_sums",
    "nominal_abscissa",
    "objective",
    "rational_exp",
    "rational_transfer",
    "run_diagnostics",
    "split_and_reduce",
    "standard_form",
    "synthesize",
    "system_from_dict",
    "system_to_dict",
    "trace_to_csv",
    "transfer",
    "truncation_matrix",
    "with_values",
]
