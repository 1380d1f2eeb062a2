"""Sliding-foot walker: hybrid variational integration and trajectory optimization."""

from .errors import (
    ConfigError,
    EventLocationError,
    GuardViolationError,
    InvalidParameterError,
    OutOfDomainError,
    StepFailureError,
    WalkerError,
    ZenoGuardError,
)
from .model import (
    ControlInput,
    EmbeddedState,
    ReducedState,
    ReferenceTrajectory,
    WalkerParams,
    derive_composites,
    embed,
    energy,
    forced_dynamics,
    friction_force,
    guards,
    impact_map,
    project,
    reference_eval,
)
from .integrator import (
    DiscretePath,
    ImpactRecord,
    IntegratorConfig,
    d1_Ld,
    d2_Ld,
    del_residual,
    discrete_forces,
    discrete_impact,
    discrete_lagrangian,
    init_from_velocity,
    legendre_momentum,
    momentum_velocity,
    simulate_hybrid,
    step,
)
from .dmoc import (
    NLPResult,
    OCProblem,
    SolverConfig,
    TabulatedReference,
    assemble_nlp,
    constraint_jacobian,
    discrete_cost,
    reference_from_path,
    solve,
    zero_control_warm_start,
)
from .oracle import (
    ContinuousTrajectory,
    OracleConfig,
    brute_force_small_nlp,
    central_difference_jacobian,
    fd_check,
    integrate_continuous,
)

__version__ = "0.1.0"
