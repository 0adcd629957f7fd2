"""Coordinate descent solvers for lasso-penalized L2 and L1 regression,
group penalties via majorization, cross-validated tuning, and a synthetic
benchmark harness."""

from .core import (
    DegenerateColumnError,
    DescentCertificateError,
    DesignMatrix,
    FitConfig,
    FitResult,
    GroupPenalty,
    GroupStructure,
    LassoPenalty,
    LossKind,
    ParameterVector,
    ResidualState,
    column_bound_b,
    dir_deriv,
    objective,
    prediction_error,
    residual_apply_update,
    standardize_columns,
    destandardize_theta,
    steepest_descent_score,
)
from .groups import GroupFitState, fit_group, group_kkt_satisfied, majorize_norm, update_group_coordinate
from .l1 import L1DerivativeTable, WeightedPoint, fit_l1, update_beta_k_l1, update_mu_l1, weighted_median
from .l2 import fit_l2, kkt_satisfied_l2, update_beta_k_l2, update_mu_l2
from .simulate import ReplicateRow, SimConfig, StudyResult, evaluate, gen_design, gen_response, replicate_study
from .tuning import (
    BracketGoldenSearch,
    BracketResult,
    CvCurvePoint,
    FoldAssignment,
    GridSearch,
    GroupSliceSearch,
    PathPoint,
    SolverFamily,
    TuningResult,
    bracket,
    cv_error,
    golden_section,
    kfold_split,
    reestimate_active,
    regularization_path,
    tune,
)

__version__ = "0.1.0"
