"""Structured low-rank approximation via penalized alternating least squares.

Fits a rank-bounded matrix with a prescribed affine cell structure
(Hankel, Sylvester-type, banded, or custom patterns) to data, with
weighted misfit norms, missing entries and fixed elements.  Includes
classic baselines and drivers for system identification and approximate
polynomial common divisors.
"""

from .structure import (
    StructureSpec,
    build_hankel,
    build_generalized_sylvester,
    build_unstructured,
    load_structure,
    save_structure,
    validate,
    evaluate,
    extract_params,
    project,
    off_structure,
    occurrence_counts,
)
from .weighting import (
    WeightSpec,
    diagonal_weights,
    identity_weights,
    frobenius_weights,
    full_weights,
    with_missing,
    factor,
    weighted_norm_sq,
)
from .solver import (
    Factors,
    PenaltyConfig,
    LambdaStep,
    SolveReport,
    init_svd,
    update_L,
    update_P,
    objective,
    structure_deviation,
    solve_fixed_lambda,
    solve,
    completion_solve,
)
from .diagnostics import (
    ConstraintDiagnostics,
    RegularityReport,
    StationarityReport,
    constraint_vector,
    constraint_jacobians,
    constraint_diagnostics,
    regularity_check,
    stationarity_report,
)
from .baselines import BaselineReport, cadzow, kung
from .apps import (
    LtiExperiment,
    PolySet,
    GcdResult,
    simulate_sysid,
    missing_stride_mask,
    fill_missing_neighbors,
    identify,
    gcd_approximate,
)

__version__ = "0.1.0"
