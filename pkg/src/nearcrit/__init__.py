"""Recurrence/transience certification toolkit for near-critical processes.

Analyzes processes X' = M X + g(X) + xi on the positive orthant whose mean
matrix M is primitive with dominant eigenvalue 1: spectral decomposition,
contraction norms, Lyapunov drift certification, hypothesis checking, and
seeded Monte Carlo classification of trajectories.
"""
from .errors import (
    ConfigError,
    ConvergenceFailure,
    DomainError,
    EmptyPremiseSet,
    NearCritError,
    NoEscapers,
    NotPrimitiveWithin,
    OrthantViolation,
    ParamContractViolation,
    PremiseCoverageWarning,
    ProfileViolatesSmallO,
    SlackTooSmall,
    SpectralRadiusNotLessThanOne,
    StructureViolation,
)
from .spectral import (
    SpectralData,
    check_primitive,
    normalize_to_critical,
    perron_decompose,
    project,
    ray_component,
    wielandt_bound,
)
from .geometry import (
    ConeConstant,
    L1Norm,
    NormBasis,
    build_contraction_norm,
    cone_constant,
    norm_equivalence_bounds,
    operator_norm,
    transverse_recursion_constants,
    vector_norm,
)
from .model import (
    CounterexampleParams,
    LogDecayProfile,
    ModelSpec,
    NoiseMomentReport,
    PowerProfile,
    default_counterexample_params,
    make_counterexample_model,
    make_embedded_model,
    make_lamperti_model,
    noise_moments_check,
    step,
    step_batch,
    validate_counterexample_params,
)
from .lyapunov import (
    BoundGrid,
    CertificationReport,
    DriftEstimate,
    LyapunovParams,
    RegionSpec,
    certify_region,
    default_bound_grid,
    drift_sweep,
    estimate_drift,
    find_invlog_bound_constant,
    invlog_increment_bound,
    log_increment_bound,
    lyap_general,
    lyap_recurrence,
    suggest_alpha,
)
from .conditions import (
    BandSampler,
    ConditionReport,
    check_noise_moment_bound,
    check_recurrence_drift,
    check_sigma_log_decay,
    check_slab_drift,
    check_transience_drift,
)
from .simulate import (
    DichotomyDemo,
    EnsembleSummary,
    RayDiagnostic,
    StructureReport,
    TrajectoryRecord,
    classify_ensemble,
    counterexample_dichotomy_demo,
    counterexample_uv_trajectory,
    crosscheck_uv_against_engine,
    embedded_chain_stats,
    ray_diagnostic,
    run_trajectory,
    verify_counterexample_structure,
)

__version__ = "0.1.0"
