"""Shapley values for the importance of training-data subsets.

Explains single predictions (or squared errors, or a test-set MSE) of a
retrainable regression model by treating disjoint subsets of the training
data as players in a coalitional game.
"""

from .dataset import (
    BiasScenario,
    Dataset,
    Partition,
    SinusoidConfig,
    center_response,
    coalition_data,
    corrupt_response,
    generate_bias,
    generate_sinusoid,
    load_csv,
    partition_blocks,
    partition_category,
    partition_quantiles,
)
from .acquisition import (
    AcquisitionPlan,
    Strategy,
    average_top_L_shapley,
    evaluate_strategies,
    plan_equal,
    plan_max,
    plan_one,
)
from .diagnostics import PropertyReport, check_axioms, collect_curve, summarize_curve
from .games import BaselinePolicy, Game, mse_game, prediction_game, squared_error_game
from .models import CoalitionCache, ModelSpec, train, train_cached
from .shapley import (
    ExactShapley,
    ShapleyEstimate,
    build_value_table,
    estimate_mc,
    estimate_mc_batch,
    exact_shapley,
    harsanyi,
)

__version__ = "0.1.0"
