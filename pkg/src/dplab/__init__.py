"""Numerical laboratory for a degenerate parabolic double phase equation.

Solves u_t = div(|Du|^(p-2) Du + a(x,t) |Du|^(q-2) Du) on space-time boxes
and discretely evaluates both sides of the estimates that make solutions
locally bounded: the truncation energy estimate, a parabolic interpolation
embedding, the shrinking-cylinder level-set iteration, and the resulting
sup bound, reporting empirical constants for each.
"""

from .doublephase import (
    CoefficientFn,
    FluxModel,
    bump_coefficient,
    check_structure,
    checkerboard_coefficient,
    constant_coefficient,
    h_integrand,
    model_flux,
    sampled_coefficient,
)
from .errors import (
    CgStalled,
    ConfigInvalid,
    CylinderOutOfRange,
    DegenerateGap,
    DimensionTooSmall,
    DplabError,
    EmptyLevelSet,
    EmptyRegion,
    EmptySampleSet,
    ExponentOrder,
    GapTooWide,
    GapTooWideForEmbedding,
    InsufficientPoints,
    LevelSignMismatch,
    NegativeArgument,
    NonpositiveVartheta,
    PicardDiverged,
    SmallnessViolated,
    TestNotCompactlySupported,
)
from .estimates import (
    CylinderSchedule,
    DeGiorgiTrace,
    EstimateReport,
    caccioppoli_sides,
    degiorgi_sequence,
    embedding_sides,
    fast_convergence_check,
    level_set_measure,
    levelset_chebyshev,
    supbound_sides,
)
from .exponents import (
    ExponentSet,
    build_exponents,
    compute_theta,
    compute_tilde_p,
    compute_vartheta_and_lambda,
    level_magnitude,
    validate_params,
)
from .harness import (
    ExperimentConfig,
    ExperimentResult,
    RandomFieldSpec,
    barenblatt_profile,
    default_config,
    fit_blowup_exponent,
    generate_field,
    heat_exact,
    make_coefficient,
    run_experiment,
)
from .mesh import (
    CutoffPair,
    Cylinder,
    Field,
    SpaceTimeGrid,
    build_cutoffs,
    gradient,
    integrate_cylinder,
    load_field,
    mean_cylinder,
    save_field,
    square_cylinder,
    sup_abs_on_cylinder,
    sup_time_spatial_mean,
    truncate,
)
from .solver import (
    DtRule,
    SolveTrace,
    SolverConfig,
    solve_cylinder,
    step_implicit,
    weak_form_residual,
)

__version__ = "0.1.0"
