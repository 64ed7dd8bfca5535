"""Distribution-free goodness-of-fit tests for discrete distributions.

Pearson's chi-square components are rotated so that their limit law is a
fixed projection of a standard normal vector, whatever the hypothesized
probabilities. Partial-sum statistics of the rotated vector are then
asymptotically distribution free.
"""

__version__ = "0.1.0"

from .exceptions import (  # noqa: E402
    ConditioningWarning,
    DegenerateGeometry,
    DegenerateModel,
    DegenerateScore,
    DfgofError,
    DimensionMismatch,
    DomainError,
    EmptyPooledCell,
    InvalidModel,
    NoConvergence,
    NonOrthogonalInputs,
    ProvenanceMismatch,
    SmallCellWarning,
)
from .rotations import (  # noqa: E402
    GeometryBundle,
    RotationOp,
    build_bases,
    build_rotation_2d,
    build_rotation_4d,
    compose,
    householder_map,
    orthogonal_part,
    recursive_rotation,
)
from .transforms import (  # noqa: E402
    AnchorPair,
    ComponentVector,
    DiscreteModel,
    SampleCounts,
    components_y,
    components_y_hat,
    inverse_transform,
    parametric_bundle,
    transform_parametric,
    transform_parametric_recursive,
    transform_simple,
    transform_two_sample,
    two_sample_components,
)
from .parametric import (  # noqa: E402
    FitResult,
    ParametricFamily,
    fisher_information,
    mle_fit,
    normalized_scores,
    power_law_family,
)
from .statistics import (  # noqa: E402
    NullTable,
    StatisticValue,
    cvm_stat,
    ks_stat,
    null_table,
    p_value,
    partial_sums,
    pearson_chi2,
)
from .montecarlo import (  # noqa: E402
    EmpiricalCdf,
    StudyConfig,
    cdf_sup_distance,
    covariance_check,
    make_study_models,
    run_null_study,
    sample_multinomial,
)
from .estimators import (  # noqa: E402
    ChiSquareRotation,
    DistributionFreeTest,
    ParametricChiSquareRotation,
)

__all__ = [
    "__version__",
    "ConditioningWarning",
    "DegenerateGeometry",
    "DegenerateModel",
    "DegenerateScore",
    "DfgofError",
    "DimensionMismatch",
    "DomainError",
    "EmptyPooledCell",
    "InvalidModel",
    "NoConvergence",
    "NonOrthogonalInputs",
    "ProvenanceMismatch",
    "SmallCellWarning",
    "GeometryBundle",
    "RotationOp",
    "build_bases",
    "build_rotation_2d",
    "build_rotation_4d",
    "compose",
    "householder_map",
    "orthogonal_part",
    "recursive_rotation",
    "AnchorPair",
    "ComponentVector",
    "DiscreteModel",
    "SampleCounts",
    "components_y",
    "components_y_hat",
    "inverse_transform",
    "parametric_bundle",
    "transform_parametric",
    "transform_parametric_recursive",
    "transform_simple",
    "transform_two_sample",
    "two_sample_components",
    "FitResult",
    "ParametricFamily",
    "fisher_information",
    "mle_fit",
    "normalized_scores",
    "power_law_family",
    "NullTable",
    "StatisticValue",
    "cvm_stat",
    "ks_stat",
    "null_table",
    "p_value",
    "partial_sums",
    "pearson_chi2",
    "EmpiricalCdf",
    "StudyConfig",
    "cdf_sup_distance",
    "covariance_check",
    "make_study_models",
    "run_null_study",
    "sample_multinomial",
    "ChiSquareRotation",
    "DistributionFreeTest",
    "ParametricChiSquareRotation",
]
