"""First-order methods for discrete-time LQR over stabilizing feedback gains."""

from .errors import (
    DegenerateQ,
    DimensionError,
    InsufficientData,
    InternalStabilityLoss,
    LQRGradError,
    NoConvergence,
    NotSchurStable,
    PatternViolation,
    StepUnderflow,
)
from .matrices import (
    SteinSolution,
    loewner_margin,
    solve_stein,
    solve_stein_transposed,
    spectral_radius,
    sym_eig_extremes,
)
from .model import (
    DominanceBound,
    LQRInstance,
    OptimalSolution,
    ValueCertificate,
    certify,
    cost,
    dominance_bound,
    dominance_coefficient,
    hessian_apply,
    hessian_form,
    hessian_matrix,
    hessian_norm_estimate,
    optimal_solution,
    x_prime,
    y_prime,
)
from .flows import FlowConfig, FlowTrajectory, flow_rhs, integrate
from .descent import (
    IterateTrace,
    StepsizeReport,
    gd_run,
    gd_stepsize,
    ngd_run,
    qn_run,
    rate_fit,
)
from .structured import LipschitzReport, SparsityPattern, lipschitz_bound, pgd_run, project
from .bench import (
    ExperimentConfig,
    RunArtifact,
    gen_lollipop_instance,
    gen_random_instance,
    run,
)

__version__ = "0.1.0"
