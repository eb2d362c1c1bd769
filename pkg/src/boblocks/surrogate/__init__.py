"""Probabilistic regression surrogates and output transformations."""

from .forest import RandomForestSurrogate, esd_variance, jackknife_variance, ltv_variance
from .gp import GaussianProcessSurrogate
from .learner import SurrogateLearner, fallback_forest, make_model
from .trafo import OutputIdentity, OutputLog, OutputStandardize, make_output_trafo

__all__ = [
    "GaussianProcessSurrogate",
    "OutputIdentity",
    "OutputLog",
    "OutputStandardize",
    "RandomForestSurrogate",
    "SurrogateLearner",
    "esd_variance",
    "fallback_forest",
    "jackknife_variance",
    "ltv_variance",
    "make_model",
    "make_output_trafo",
]
