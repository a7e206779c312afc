"""Attention-weighted stacked ensemble of bootstrap MLPs for crop-type
classification from Landsat-8 band reflectances and vegetation indices."""

from .ensemble import AsenClassifier, PoolConfig, fit_asen_classifier, predict
from .errors import AsenError
from .mlp import MlpConfig, TrainConfig

__version__ = "0.1.0"

__all__ = ["AsenClassifier", "AsenError", "MlpConfig", "PoolConfig", "TrainConfig",
           "fit_asen_classifier", "predict", "__version__"]
