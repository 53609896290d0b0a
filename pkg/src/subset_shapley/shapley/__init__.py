"""Exact and sampled Shapley values for subsets, features and both combined."""

from .exact import (
    MAX_PERMUTATION_K,
    MAX_TABLE_K,
    ExactShapley,
    HarsanyiDividends,
    build_value_table,
    exact_shapley,
    harsanyi,
)
from .features import CombinedEstimate, FeatureEstimate, combined_shapley_mc, feature_shapley_mc
from .sampling import (
    MODES,
    ShapleyEstimate,
    average_group_shapley,
    estimate_mc,
    estimate_mc_batch,
    explain_squared_error,
    global_mse_shapley,
)

__all__ = [
    "MAX_PERMUTATION_K",
    "MAX_TABLE_K",
    "MODES",
    "CombinedEstimate",
    "ExactShapley",
    "FeatureEstimate",
    "HarsanyiDividends",
    "ShapleyEstimate",
    "average_group_shapley",
    "build_value_table",
    "combined_shapley_mc",
    "estimate_mc",
    "estimate_mc_batch",
    "exact_shapley",
    "explain_squared_error",
    "feature_shapley_mc",
    "global_mse_shapley",
    "harsanyi",
]
