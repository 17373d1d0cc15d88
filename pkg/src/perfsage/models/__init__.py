"""Featurization and runtime predictors."""

from perfsage.models.core import (
    FAMILIES,
    MAX_LIGHTWEIGHT_PARAMS,
    MIN_PREDICTION,
    ModelConfig,
    TrainedModel,
    default_config,
    input_names,
    linear_coefficients,
    load_model,
    param_count,
    predict,
    save_model,
    train,
    train_const,
    train_lrc,
    train_nlrc,
    train_nn,
)
from perfsage.models.features import COMPLEXITY, FeatureVector, feature_names, featurize, params_from_features

__all__ = [
    "COMPLEXITY",
    "FAMILIES",
    "MAX_LIGHTWEIGHT_PARAMS",
    "MIN_PREDICTION",
    "FeatureVector",
    "ModelConfig",
    "TrainedModel",
    "default_config",
    "feature_names",
    "featurize",
    "input_names",
    "linear_coefficients",
    "load_model",
    "param_count",
    "params_from_features",
    "predict",
    "save_model",
    "train",
    "train_const",
    "train_lrc",
    "train_nlrc",
    "train_nn",
]
