"""Surrogate wrapper that turns archive points into features and predictions.

The learner owns the input encoding, the output transformation and the
error fallback: when the primary model fails to fit and ``catch_errors``
is on, a 10-tree forest with jackknife standard deviations stands in.
"""

import logging

import numpy as np
from sklearn.base import clone

from .._validation import check_generator, draw_seed
from ..exceptions import SurrogateError
from .forest import RandomForestSurrogate
from .gp import GaussianProcessSurrogate
from .trafo import make_output_trafo

logger = logging.getLogger(__name__)

INPUT_TRAFOS = ("none", "unitcube")


def fallback_forest():
    """The emergency model: 10 trees, jackknife standard deviation."""
    return RandomForestSurrogate(n_trees=10, variance_estimator="jackknife")


def _handles_missing(model):
    return isinstance(model, RandomForestSurrogate)


class SurrogateLearner:
    """Fit a regression model on archive points and predict ``(mean, sd)``.

    Parameters
    ----------
    model : estimator
        Any regressor with ``predict(X, return_std=True)`` and a
        ``random_state`` parameter.
    space : ParamSpace
    input_trafo : {"none", "unitcube"}
    output_trafo : {"none", "standardize", "log"}, transformer or None
    catch_errors : bool
        Swap in :func:`fallback_forest` when the primary fit fails.
    random_state : int, Generator or None
        One model seed is drawn from it per fit.
    """

    def __init__(self, model, space, input_trafo="none", output_trafo=None, catch_errors=True,
                 random_state=None):
        if input_trafo not in INPUT_TRAFOS:
            raise ValueError(f"unknown input transformation {input_trafo!r}")
        self.model = model
        self.space = space
        self.input_trafo = input_trafo
        self.output_trafo = output_trafo
        self.catch_errors = catch_errors
        self.rng = check_generator(random_state)
        self.live_model = None
        self.model_ = None

    def encode(self, points, model=None):
        """Feature matrix for ``points`` as the given model expects it."""
        model = self.model if model is None else model
        if _handles_missing(model):
            if self.input_trafo == "unitcube":
                d = self.space.dim()
                U = np.array([self.space._to_unit_unchecked(p) for p in points], dtype=float).reshape(-1, d)
                mask = np.array([self.space.active_mask(p) for p in points], dtype=bool).reshape(-1, d)
                U[~mask] = np.nan
                return U
            return self.space.encode(points, missing="nan")
        if self.input_trafo == "unitcube":
            return self.space.encode_unit(points)
        return self.space.encode(points, missing="impute")

    def fit(self, points, y):
        """Refit on all ``points`` with minimization-scale targets ``y``."""
        y = np.asarray(y, dtype=float).ravel()
        if len(y) == 0:
            raise SurrogateError("no data to fit")
        self.trafo_ = clone(make_output_trafo(self.output_trafo)).fit(y)
        z = self.trafo_.transform(y)
        seed = draw_seed(self.rng)
        try:
            model = clone(self.model).set_params(random_state=seed)
            self.model_ = model.fit(self.encode(points, model), z)
            self.live_model = "primary"
        except Exception as err:
            if not self.catch_errors:
                raise
            logger.warning("surrogate fit failed (%s); using fallback forest", err)
            model = fallback_forest().set_params(random_state=seed)
            try:
                self.model_ = model.fit(self.encode(points, model), z)
            except Exception as err2:
                raise SurrogateError(f"fallback forest failed: {err2}") from err2
            self.live_model = "fallback"
        self.y_best_ = float(np.min(y))
        self.n_train_ = len(y)
        return self

    @property
    def transformed_scale(self):
        """True when predictions stay on the transformed output scale."""
        return not getattr(self.trafo_, "invert_posterior", True)

    def f_min(self):
        """Incumbent objective value on the prediction scale."""
        if self.transformed_scale:
            return float(self.trafo_.transform([self.y_best_])[0])
        return self.y_best_

    def predict(self, points, raw_scale=False):
        """Posterior mean and standard deviation for ``points``.

        With ``raw_scale`` the output transformation is always inverted.
        """
        if self.model_ is None:
            raise SurrogateError("learner is not fitted")
        X = self.encode(points, self.model_)
        return self.predict_encoded(X, raw_scale)

    def predict_encoded(self, X, raw_scale=False):
        mean, sd = self.model_.predict(X, return_std=True)
        if raw_scale or not self.transformed_scale:
            mean, sd = self.trafo_.inverse_posterior(mean, sd)
        return np.asarray(mean, float), np.asarray(sd, float)


def make_model(key, **params):
    """Regressor from a short key: ``gp`` or ``rf``."""
    if key == "gp":
        return GaussianProcessSurrogate(**params)
    if key == "rf":
        return RandomForestSurrogate(**params)
    raise ValueError(f"unknown surrogate {key!r}")
