"""Stage II: pose estimation as token classification, plus baselines."""

from .baselines import (
    BinsModel,
    RegressionModel,
    bin_labels,
    bins_expectation,
    bins_loss,
    bins_predict,
    make_bins,
    make_regression,
    regression_loss,
    regression_predict,
    train_baseline,
)
from .featurizer import FeaturizerParams, featurizer_forward, make_featurizer
from .model import (
    EstimatorConfig,
    EstimatorModel,
    HeadParams,
    Observation,
    head_forward,
    load_estimator,
    make_estimator,
    make_observations,
    save_estimator,
)
from .training import (
    EstimatorLossResult,
    EvalProtocol,
    TrainingDiverged,
    estimator_loss,
    evaluate_estimator,
    gt_labels,
    predict,
    soft_tokens,
    token_accuracy,
    train_estimator,
)

__all__ = [
    "BinsModel",
    "EstimatorConfig",
    "EstimatorLossResult",
    "EstimatorModel",
    "EvalProtocol",
    "FeaturizerParams",
    "HeadParams",
    "Observation",
    "RegressionModel",
    "TrainingDiverged",
    "bin_labels",
    "bins_expectation",
    "bins_loss",
    "bins_predict",
    "estimator_loss",
    "evaluate_estimator",
    "featurizer_forward",
    "gt_labels",
    "head_forward",
    "load_estimator",
    "make_bins",
    "make_estimator",
    "make_featurizer",
    "make_observations",
    "make_regression",
    "predict",
    "regression_loss",
    "regression_predict",
    "save_estimator",
    "soft_tokens",
    "token_accuracy",
    "train_baseline",
    "train_estimator",
]
