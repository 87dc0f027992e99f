"""Per-age Gaussian process forecasting of mortality and fertility curves."""

from .errors import MortGPError
from .gp_core import GPConfig, GPModel, TrainingSet, fit, predict, prediction_interval
from .surface import DemographicSurface

__version__ = "0.1.0"

__all__ = [
    "DemographicSurface",
    "GPConfig",
    "GPModel",
    "MortGPError",
    "TrainingSet",
    "fit",
    "predict",
    "prediction_interval",
]
