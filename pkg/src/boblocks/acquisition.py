"""Acquisition functions.

Every acquisition returns values where larger is better.  The functional
forms operate on arrays of posterior means and standard deviations; the
classes bundle the tunable constants and are selected by key through
:func:`make_acquisition`.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.special import ndtr

from .exceptions import ConfigError
from .hypervolume import hypervolume

DECAY_RATE = 0.99
PAREGO_RHO = 0.05

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def norm_pdf(z):
    z = np.asarray(z, float)
    with np.errstate(over="ignore"):
        return _INV_SQRT_2PI * np.exp(-0.5 * z * z)


def norm_cdf(z):
    return ndtr(z)


def _zscore(num, sd):
    # tiny sd can overflow z to inf, which the closed forms handle
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        return np.where(sd > 0, num / np.where(sd > 0, sd, 1.0), 0.0)


# ------------------------------------------------------------------ closed forms
def ei(mean, sd, f_min):
    """Expected improvement below ``f_min``; ``max(f_min - mean, 0)`` at zero sd."""
    mean, sd = np.broadcast_arrays(np.asarray(mean, float), np.asarray(sd, float))
    diff = f_min - mean
    z = _zscore(diff, sd)
    smooth = diff * norm_cdf(z) + sd * norm_pdf(z)
    return np.where(sd > 0, np.maximum(smooth, 0.0), np.maximum(diff, 0.0))


def pi(mean, sd, f_min):
    """Probability of falling below ``f_min``; an indicator at zero sd."""
    mean, sd = np.broadcast_arrays(np.asarray(mean, float), np.asarray(sd, float))
    diff = f_min - mean
    return np.where(sd > 0, norm_cdf(_zscore(diff, sd)), (diff > 0).astype(float))


def lcb(mean, sd, lam):
    """Lower confidence bound ``mean - lam * sd`` (to be minimized)."""
    return np.asarray(mean, float) - lam * np.asarray(sd, float)


def ei_log(mean, sd, f_min):
    """Expected improvement on the original scale of a log-scale model.

    ``mean`` and ``sd`` describe ``ln y``; ``f_min`` is on the positive
    pre-log scale.
    """
    if not f_min > 0:
        raise ValueError("ei_log needs a positive f_min")
    mean, sd = np.broadcast_arrays(np.asarray(mean, float), np.asarray(sd, float))
    safe = np.where(sd > 0, sd, 1.0)
    v = (math.log(f_min) - mean) / safe
    smooth = f_min * norm_cdf(v) - np.exp(mean + safe**2 / 2) * norm_cdf(v - safe)
    return np.where(sd > 0, np.maximum(smooth, 0.0), np.maximum(f_min - np.exp(mean), 0.0))


def decayed(value, iteration, rate=DECAY_RATE):
    return value * rate**iteration


def parego_scalarize(Y, weights, rho=PAREGO_RHO):
    """Augmented Tchebycheff scalarization of normalized objective rows."""
    w = np.asarray(weights, float)
    if abs(w.sum() - 1.0) > 1e-9 or np.any(w < 0):
        raise ConfigError("ParEGO weights must be non-negative and sum to 1")
    Y = np.atleast_2d(np.asarray(Y, float))
    weighted = Y * w
    return weighted.max(axis=1) + rho * weighted.sum(axis=1)


def simplex_weights(k, rng):
    """Uniform draw from the probability simplex."""
    e = rng.exponential(size=k)
    return e / e.sum()


def sms_epsilon(front, n_left):
    """Adaptive epsilon for epsilon-dominance, per objective."""
    front = np.asarray(front, float)
    k = front.shape[1]
    c = 1.0 - 1.0 / 2**k
    spread = front.max(axis=0) - front.min(axis=0)
    return spread / (len(front) + c * max(n_left, 0))


def smsego_values(y_opt, front, ref, epsilon=None):
    """Optimistic hypervolume improvement with epsilon-dominance penalty.

    Parameters
    ----------
    y_opt : ndarray of shape (m, k)
        Optimistic objective vectors, e.g. ``mean - sd``.
    front : ndarray of shape (p, k)
        Current Pareto front (minimization).
    ref : array-like of shape (k,)
    epsilon : array-like of shape (k,) or None
        Candidates within ``epsilon`` of being dominated score
        ``1 - max_a prod(1 + max(y - a, 0))``, which is never positive.
    """
    y_opt = np.atleast_2d(np.asarray(y_opt, float))
    ref = np.asarray(ref, float)
    front = np.asarray(front, float).reshape(-1, len(ref))
    if front.size and np.any(front >= ref):
        raise ConfigError("reference point must be worse than every front point")
    eps = np.zeros(len(ref)) if epsilon is None else np.asarray(epsilon, float)
    base = hypervolume(front, ref) if len(front) else 0.0
    out = np.empty(len(y_opt))
    for i, y in enumerate(y_opt):
        if len(front):
            dominated = np.all(front <= y + eps, axis=1)
            if dominated.any():
                gaps = np.maximum(y - front[dominated], 0.0)
                out[i] = 1.0 - np.max(np.prod(1.0 + gaps, axis=1))
                continue
        out[i] = hypervolume(np.vstack([front, y]), ref) - base
    return out


# ------------------------------------------------------------------ contexts
@dataclass
class AcqContext:
    """Quantities that change between proposals.

    ``f_min`` lives on the scale the surrogate predicts on.
    """

    f_min: float = 0.0
    iteration: int = 0
    pareto_front_y: np.ndarray = None
    reference_point: np.ndarray = None
    n_left: int = 0
    extra: dict = field(default_factory=dict)


class Acquisition:
    key = None
    multi_objective = False
    needs_log_scale = False

    def __call__(self, mean, sd, ctx):
        raise NotImplementedError

    def for_worker(self, rng):
        """Per-worker copy; stochastic variants draw their constant here."""
        return self

    def get_params(self):
        return {k: v for k, v in vars(self).items() if not k.startswith("_")}

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.get_params().items())
        return f"{type(self).__name__}({args})"


class AcqEI(Acquisition):
    """Expected improvement, optionally against ``f_min - epsilon``.

    With ``epsilon_decay`` and no explicit epsilon the offset starts at 0.1.
    """

    key = "ei"

    def __init__(self, epsilon=None, epsilon_decay=False):
        if epsilon is not None and epsilon < 0:
            raise ConfigError("epsilon must be >= 0")
        self.epsilon = epsilon
        self.epsilon_decay = epsilon_decay

    def offset(self, ctx):
        eps = self.epsilon if self.epsilon is not None else (0.1 if self.epsilon_decay else 0.0)
        return decayed(eps, ctx.iteration) if self.epsilon_decay else eps

    def __call__(self, mean, sd, ctx):
        return ei(mean, sd, ctx.f_min - self.offset(ctx))


class AcqPI(AcqEI):
    key = "pi"

    def __call__(self, mean, sd, ctx):
        return pi(mean, sd, ctx.f_min - self.offset(ctx))


class AcqCB(Acquisition):
    """Negated lower confidence bound."""

    key = "cb"

    def __init__(self, lam=1.0, lambda_decay=False):
        if not lam > 0:
            raise ConfigError("lambda must be > 0")
        self.lam = lam
        self.lambda_decay = lambda_decay

    def effective_lambda(self, ctx):
        return decayed(self.lam, ctx.iteration) if self.lambda_decay else self.lam

    def __call__(self, mean, sd, ctx):
        return -lcb(mean, sd, self.effective_lambda(ctx))


class AcqMean(Acquisition):
    key = "mean"

    def __call__(self, mean, sd, ctx):
        return -np.asarray(mean, float)


class AcqSD(Acquisition):
    key = "sd"

    def __call__(self, mean, sd, ctx):
        return np.asarray(sd, float).copy()


class AcqLogEI(Acquisition):
    """EI under a log-normal model; ``ctx.f_min`` is the log-scale incumbent."""

    key = "ei_log"
    needs_log_scale = True

    def __call__(self, mean, sd, ctx):
        return ei_log(mean, sd, math.exp(ctx.f_min))


class AcqStochasticCB(Acquisition):
    """LCB whose lambda is drawn once per worker, log-uniform on ``[min_lambda, max_lambda]``."""

    key = "stochastic_cb"

    def __init__(self, min_lambda=1.0, max_lambda=10.0, lam=None):
        if not 0 < min_lambda <= max_lambda:
            raise ConfigError("need 0 < min_lambda <= max_lambda")
        if min_lambda == max_lambda and lam is None:
            lam = float(min_lambda)
        self.min_lambda = min_lambda
        self.max_lambda = max_lambda
        self.lam = lam

    def for_worker(self, rng):
        if self.min_lambda == self.max_lambda:
            lam = float(self.min_lambda)
        else:
            lam = float(np.exp(rng.uniform(math.log(self.min_lambda), math.log(self.max_lambda))))
        return AcqStochasticCB(self.min_lambda, self.max_lambda, lam)

    def __call__(self, mean, sd, ctx):
        if self.lam is None:
            raise ConfigError("stochastic_cb needs for_worker() before use")
        return -lcb(mean, sd, self.lam)


class AcqStochasticEI(Acquisition):
    """EI whose offset is drawn once per worker, uniform on ``[0, epsilon_max]``."""

    key = "stochastic_ei"

    def __init__(self, epsilon_max=0.1, epsilon=None):
        if epsilon_max < 0:
            raise ConfigError("epsilon_max must be >= 0")
        self.epsilon_max = epsilon_max
        self.epsilon = epsilon

    def for_worker(self, rng):
        return AcqStochasticEI(self.epsilon_max, float(rng.uniform(0.0, self.epsilon_max)))

    def __call__(self, mean, sd, ctx):
        return ei(mean, sd, ctx.f_min - (self.epsilon or 0.0))


class AcqSmsEgo(Acquisition):
    """Optimistic hypervolume improvement; ``mean`` and ``sd`` are ``(m, k)``.

    With ``adaptive_epsilon`` candidates within the adaptive epsilon of the
    front are penalized as well.  That spaces proposals apart but, on fronts
    denser than the epsilon, leaves re-sampling an existing front point as
    the best option, so it is off by default.
    """

    key = "smsego"
    multi_objective = True

    def __init__(self, lam=1.0, adaptive_epsilon=False):
        self.lam = lam
        self.adaptive_epsilon = adaptive_epsilon

    def __call__(self, mean, sd, ctx):
        y_opt = np.asarray(mean, float) - self.lam * np.asarray(sd, float)
        front = ctx.pareto_front_y
        eps = sms_epsilon(front, ctx.n_left) if self.adaptive_epsilon and len(front) > 1 else None
        return smsego_values(y_opt, front, ctx.reference_point, eps)


ACQUISITIONS = {cls.key: cls for cls in (AcqEI, AcqLogEI, AcqCB, AcqPI, AcqMean, AcqSD, AcqStochasticCB,
                                          AcqStochasticEI, AcqSmsEgo)}


def make_acquisition(key, **params):
    """Acquisition instance from its key and constructor arguments."""
    if isinstance(key, Acquisition):
        return key
    try:
        cls = ACQUISITIONS[key]
    except KeyError:
        raise ConfigError(f"unknown acquisition {key!r}; choose from {sorted(ACQUISITIONS)}") from None
    return cls(**params)
