"""Output transformations applied to objective values before model fitting."""

import logging

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

logger = logging.getLogger(__name__)

LOG_FLOOR = 1e-3


def _as_1d(y):
    return np.asarray(y, dtype=float).ravel()


class OutputIdentity(TransformerMixin, BaseEstimator):
    """No-op transformation."""

    invert_posterior = True

    def fit(self, y, X=None):
        self.fitted_ = True
        return self

    def transform(self, y):
        return _as_1d(y)

    def inverse_transform(self, z):
        return _as_1d(z)

    def inverse_posterior(self, mean, sd):
        return np.asarray(mean, float), np.asarray(sd, float)


class OutputStandardize(TransformerMixin, BaseEstimator):
    """Center and scale to unit standard deviation.

    The model posterior is mapped back to the original scale before the
    acquisition function sees it.
    """

    invert_posterior = True

    def fit(self, y, X=None):
        y = _as_1d(y)
        self.mean_ = float(np.mean(y))
        sd = float(np.std(y))
        self.scale_ = sd if sd > 0 else 1.0
        return self

    def transform(self, y):
        check_is_fitted(self, "mean_")
        return (_as_1d(y) - self.mean_) / self.scale_

    def inverse_transform(self, z):
        check_is_fitted(self, "mean_")
        return _as_1d(z) * self.scale_ + self.mean_

    def inverse_posterior(self, mean, sd):
        return np.asarray(mean) * self.scale_ + self.mean_, np.asarray(sd) * self.scale_


class OutputLog(TransformerMixin, BaseEstimator):
    """Affine map of ``[min(y), max(y)]`` onto ``[1e-3, 1]`` followed by ``ln``.

    By default the posterior stays on the log scale (``invert_posterior``
    is False), so the acquisition function is evaluated there.  Inverting
    treats the log-scale posterior as Gaussian, giving log-normal moments.
    A constant ``y`` cannot be mapped; standardization is used instead.
    """

    def __init__(self, invert_posterior=False):
        self.invert_posterior = invert_posterior

    def fit(self, y, X=None):
        y = _as_1d(y)
        lo, hi = float(np.min(y)), float(np.max(y))
        if hi > lo:
            self.slope_ = (1.0 - LOG_FLOOR) / (hi - lo)
            self.intercept_ = LOG_FLOOR - self.slope_ * lo
            self.fallback_ = None
        else:
            logger.warning("constant objective values; log transformation replaced by standardization")
            self.fallback_ = OutputStandardize().fit(y)
        return self

    def transform(self, y):
        check_is_fitted(self, "fallback_")
        if self.fallback_ is not None:
            return self.fallback_.transform(y)
        u = self.slope_ * _as_1d(y) + self.intercept_
        # values below the fitted minimum are clipped to the floor
        return np.log(np.maximum(u, LOG_FLOOR * 1e-3))

    def inverse_transform(self, z):
        check_is_fitted(self, "fallback_")
        if self.fallback_ is not None:
            return self.fallback_.inverse_transform(z)
        return (np.exp(_as_1d(z)) - self.intercept_) / self.slope_

    def inverse_posterior(self, mean, sd):
        if self.fallback_ is not None:
            return self.fallback_.inverse_posterior(mean, sd)
        mean = np.asarray(mean, float)
        var = np.asarray(sd, float) ** 2
        m = np.exp(mean + var / 2)
        s = np.sqrt(np.expm1(var) * np.exp(2 * mean + var))
        return (m - self.intercept_) / self.slope_, s / self.slope_


OUTPUT_TRAFOS = {"none": OutputIdentity, "standardize": OutputStandardize, "log": OutputLog}


def make_output_trafo(key):
    """Build an output transformation from its key or pass an instance through."""
    if key is None:
        return OutputIdentity()
    if isinstance(key, str):
        try:
            return OUTPUT_TRAFOS[key]()
        except KeyError:
            raise ValueError(f"unknown output transformation {key!r}") from None
    return key
