"""Hyperparameter selection by cross-validation with an algorithmic-stability penalty."""

from .cv import (BoundInputs, CVEvaluation, FitCache, SelectionReport, bound_from_report,
                 coordinate_descent, coordinate_descent_select, cv_evaluate, default_lambda_grid,
                 exhaustive_search, fit_budget, generalization_bound, kcv_select, nested_select,
                 regularized_score, retrain_final)
from .data import (SQUARED_ERROR, Dataset, FoldPartition, LossFn, MetricSummary, Standardization,
                   geometric_mean, geometric_mean_ratio, load_csv, make_folds, standardize)
from .errors import ConfigError, DataError, FitError, NumericalError, StabCVError
from .experiment import (ExperimentConfig, RunRecord, load_config, repeat_ratio_summary,
                         run_experiment, summarize)
from .learners import (CartParams, HyperGrid, RidgeParams, SparseRidgeParams, default_grid, fit,
                       fit_cart, fit_ridge, fit_sparse_ridge, predict)
from .synth import SynthConfig, SynthInstance, generate, heatmap_experiment

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
