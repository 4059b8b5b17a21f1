"""Distributional gradient boosting: every parameter of a response
distribution gets its own Newton-boosted tree ensemble."""
from .data import Dataset, read_csv, simulate_hetero, simulate_train_test, write_csv
from .diagnostics import feature_importance, partial_dependence, quantile_residuals
from .errors import LssError
from .families import (
    Expectile, Gamma, LogNormal, Normal, StudentT, expectile_grad_hess, gaic, get_family,
)
from .scoring import (
    PredictiveDistribution, crps, empirical_coverage, log_score, point_metrics,
    predict_params, predict_quantiles, score,
)
from .serialize import load_model, save_model
from .trainer import (
    BoostConfig, LssModel, Step2Config, TrainConfig, global_deviance, train, train_step1,
    train_step2,
)
from .tree import Ensemble, TreeParams, boost, grow_tree, leaf_weight, split_gain
from .tuner import SearchSpace, random_search

__version__ = "0.1.0"
