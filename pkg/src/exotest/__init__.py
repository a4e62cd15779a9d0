"""Exact exogeneity tests for linear instrumental-variable regressions."""
__version__ = "0.1.0"

from .estimator import ExogeneityTest, TwoStageLeastSquares
from .estimators import EstimatorBundle, delta_inverse_paths, fit
from .exceptions import (
    DataError, DegenerateDimsError, DrawError, IdentificationDataError, InvalidInput, SpecError,
    UserError,
)
from .mct import ErrorLaw, MctConfig, MctReport, draw_null_statistics, mc_pvalue, mc_test, plan_level
from .problem import ColumnRoles, ExogeneityProblem, load_problem, make_problem, read_csv, validate
from .statistics import (
    STATISTICS, StatisticSet, WeightOperatorSet, block_triangular_transform, compute,
    compute_direct, compute_from_vector, compute_ssr_oracle, reference_pvalues, weight_operators,
)

__all__ = [
    "ColumnRoles", "DataError", "DegenerateDimsError", "DrawError", "ErrorLaw", "EstimatorBundle",
    "ExogeneityProblem", "ExogeneityTest", "IdentificationDataError", "InvalidInput", "MctConfig",
    "MctReport", "STATISTICS", "SpecError", "StatisticSet", "TwoStageLeastSquares", "UserError",
    "WeightOperatorSet", "block_triangular_transform", "compute", "compute_direct",
    "compute_from_vector", "compute_ssr_oracle", "delta_inverse_paths", "draw_null_statistics",
    "fit", "load_problem", "make_problem", "mc_pvalue", "mc_test", "plan_level", "read_csv",
    "reference_pvalues", "validate", "weight_operators",
]
