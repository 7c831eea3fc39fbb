"""Stochastic approximation for variational inequalities defined by CVaR costs."""

from .complexity import (
    ComplexityInputs,
    bias_bound,
    concentration_tail,
    required_bias,
    required_samples,
)
from .cvar import CvarEstimate, empirical_cvar, empirical_cvar_vector, exact_cvar_affine_uniform
from .errors import (
    CostBoundsError,
    CvarViError,
    DivergenceError,
    InfeasibleSetError,
    InvalidInputError,
    UnsupportedOperationError,
)
from .feasible import (
    Box,
    KktPoint,
    PolyhedralSet,
    clipped_max,
    kkt_residuals,
    licq_check,
    project,
    recover_multipliers,
)
from .problem import (
    AffineUniformModel,
    MonotonicityReport,
    UncertainCostModel,
    ViProblem,
    empirical_map,
    exact_map,
    monotonicity_report,
    solution_error,
)
from .routing import (
    CweReport,
    OdPair,
    RoutingNetwork,
    benchmark_instance,
    load_network,
    to_vi_problem,
    verify_cwe,
)
from .solvers import (
    IterateTrace,
    PenaltyRamp,
    SampleSchedule,
    SolverConfig,
    StepSchedule,
    make_schedule,
    run,
    run_multiplier,
    run_penalty,
    run_projected,
)

__version__ = "0.1.0"
