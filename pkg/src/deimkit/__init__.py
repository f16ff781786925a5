"""Weighted discrete empirical interpolation (W-DEIM) toolkit.

Weighted POD bases, interpolation index selection (greedy DEIM, Q-DEIM,
strong RRQR), DEIM projectors in weighted inner products with certified
error constants, and drivers for the accompanying numerical experiments.
"""

from .deim import (
    DeimProjector,
    build_deim,
    build_oversampled,
    build_wdeim_generalized,
    build_wdeim_pointwise,
    build_wdeim_scaled,
    canonical_analysis,
    dgeim_residuals,
    error_decomposition,
    tangent_norm,
)
from .errors import (
    BoundViolationError,
    BreakdownError,
    ConfigError,
    ConvergenceError,
    DeimError,
    DimensionError,
    NotPositiveDefiniteError,
    NumericalError,
    RankDeficiencyError,
    SingularFactorError,
)
from .linalg import kahan_matrix, principal_angles, qr_column_pivoted, srrqr, srrqr_bound, thin_svd
from .pod import PodBasis, pod_basis, pod_basis_gsvd, pod_project, rank_select, weighted_qr
from .selection import (
    SelectionOperator,
    lemma_bound,
    select,
    select_deim_greedy,
    select_oversampled,
    select_qdeim,
    select_srrqr,
)
from .weighting import WeightOperator, as_weight, condition_estimate, equilibrate, w_inner, w_norm, w_operator_norm

__version__ = "0.1.0"

__all__ = [
    "as_weight",
    "BoundViolationError",
    "BreakdownError",
    "build_deim",
    "build_oversampled",
    "build_wdeim_generalized",
    "build_wdeim_pointwise",
    "build_wdeim_scaled",
    "canonical_analysis",
    "condition_estimate",
    "ConfigError",
    "ConvergenceError",
    "DeimError",
    "DeimProjector",
    "dgeim_residuals",
    "DimensionError",
    "equilibrate",
    "error_decomposition",
    "kahan_matrix",
    "lemma_bound",
    "NotPositiveDefiniteError",
    "NumericalError",
    "pod_basis",
    "pod_basis_gsvd",
    "pod_project",
    "PodBasis",
    "principal_angles",
    "qr_column_pivoted",
    "rank_select",
    "RankDeficiencyError",
    "select",
    "select_deim_greedy",
    "select_oversampled",
    "select_qdeim",
    "select_srrqr",
    "SelectionOperator",
    "SingularFactorError",
    "srrqr",
    "srrqr_bound",
    "tangent_norm",
    "thin_svd",
    "w_inner",
    "w_norm",
    "w_operator_norm",
    "weighted_qr",
    "WeightOperator",
]
