"""Gaussian process regression with a constant mean and ARD stationary kernels.

The kernel is ``k(x, x') = s2 * R(x, x')`` where ``R`` is a product of
one-dimensional correlations.  For fixed lengthscales and nugget the
constant mean and ``s2`` have closed-form maximum likelihood values, so
only the lengthscales (and optionally the nugget) are searched.  The
search is derivative-free: random multi-start candidates followed by
Nelder-Mead refinement of the best few.
"""

import logging
import math

import numpy as np
from numba import njit
from scipy.linalg import lapack, solve_triangular
from scipy.optimize import minimize
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .._validation import check_generator
from ..exceptions import FitFailed

logger = logging.getLogger(__name__)

KERNELS = ("gauss", "matern32", "matern52", "exp")
_SQRT3 = math.sqrt(3.0)
_SQRT5 = math.sqrt(5.0)
_LS_RANGE = (1e-2, 1e2)
# below this reciprocal condition number a solve no longer reproduces the targets
MIN_RCOND = 1e-10
_NUGGET_RANGE = (1e-10, 1.0)


def correlation(D, kernel):
    """Product-form correlation from scaled absolute differences.

    Parameters
    ----------
    D : ndarray of shape (..., d)
        ``|x_j - x'_j| / lengthscale_j``.
    kernel : str
    """
    if kernel == "gauss":
        return np.exp(-0.5 * np.sum(D**2, axis=-1))
    if kernel == "exp":
        return np.exp(-np.sum(D, axis=-1))
    if kernel == "matern32":
        return np.exp(np.sum(np.log1p(_SQRT3 * D) - _SQRT3 * D, axis=-1))
    if kernel == "matern52":
        return np.exp(np.sum(np.log1p(_SQRT5 * D + (5.0 / 3.0) * D**2) - _SQRT5 * D, axis=-1))
    raise ValueError(f"unknown kernel {kernel!r}")


_KERNEL_CODE = {"gauss": 0, "exp": 1, "matern32": 2, "matern52": 3}


@njit(cache=True)
def _corr_matrix(A, B, ls, code, symmetric):
    # product of 1-D correlations; the exponential factors are summed first
    # so each pair needs a single exp
    n, m, d = A.shape[0], B.shape[0], A.shape[1]
    R = np.empty((n, m))
    for i in range(n):
        j0 = i if symmetric else 0
        for j in range(j0, m):
            poly = 1.0
            expo = 0.0
            for k in range(d):
                r = abs(A[i, k] - B[j, k]) / ls[k]
                if code == 0:
                    expo -= 0.5 * r * r
                elif code == 1:
                    expo -= r
                elif code == 2:
                    poly *= 1.0 + _SQRT3 * r
                    expo -= _SQRT3 * r
                else:
                    poly *= 1.0 + _SQRT5 * r + (5.0 / 3.0) * r * r
                    expo -= _SQRT5 * r
            v = poly * math.exp(expo)
            R[i, j] = v
            if symmetric:
                R[j, i] = v
    return R


def corr_matrix(A, B, lengthscales, kernel):
    """Correlation matrix between the rows of ``A`` and ``B``."""
    if kernel not in _KERNEL_CODE:
        raise ValueError(f"unknown kernel {kernel!r}")
    A = np.ascontiguousarray(A, dtype=np.float64)
    B = np.ascontiguousarray(B, dtype=np.float64)
    ls = np.ascontiguousarray(lengthscales, dtype=np.float64)
    return _corr_matrix(A, B, ls, _KERNEL_CODE[kernel], A is B)


def _well_conditioned_cholesky(C):
    """Lower Cholesky factor, or None if ``C`` is not numerically positive definite."""
    try:
        L = np.linalg.cholesky(C)
    except np.linalg.LinAlgError:
        return None
    rcond, info = lapack.dpocon(L, float(np.abs(C).sum(axis=0).max()), uplo="L")
    return L if info == 0 and rcond >= MIN_RCOND else None


def _cholesky_with_jitter(C):
    """Cholesky factor of ``C``, adding diagonal jitter on failure or ill-conditioning.

    Returns the lower factor and the jitter that was added.
    """
    L = _well_conditioned_cholesky(C)
    if L is not None:
        return L, 0.0
    base = np.trace(C) / len(C)
    jitter = 1e-10 * base
    while jitter <= 1e-4 * base * (1 + 1e-9):
        L = _well_conditioned_cholesky(C + jitter * np.eye(len(C)))
        if L is not None:
            return L, jitter
        jitter *= 10
    raise FitFailed("kernel matrix not positive definite after jitter escalation")


class GaussianProcessSurrogate(RegressorMixin, BaseEstimator):
    """Kriging model with a constant trend.

    Parameters
    ----------
    kernel : {"gauss", "matern32", "matern52", "exp"}, default="matern52"
    nugget : float or "free", default=0.0
        Diagonal term relative to the signal variance.  ``"free"`` fits it
        alongside the lengthscales.
    scale_inputs : bool, default=False
        Standardize every input column before kernel evaluation.
    n_starts : int, default=20
        Multi-start candidates; the first is always ``range / 2``.
    n_refine : int, default=3
        Best candidates refined by Nelder-Mead.
    max_iter : int, default=200
        Nelder-Mead iterations per refinement.
    random_state : int, Generator or None
    """

    def __init__(self, kernel="matern52", nugget=0.0, scale_inputs=False, n_starts=20, n_refine=3,
                 max_iter=200, random_state=None):
        self.kernel = kernel
        self.nugget = nugget
        self.scale_inputs = scale_inputs
        self.n_starts = n_starts
        self.n_refine = n_refine
        self.max_iter = max_iter
        self.random_state = random_state

    # ------------------------------------------------------------- likelihood
    def _free_nugget(self):
        return isinstance(self.nugget, str)

    def _unpack(self, theta):
        d = self.X_train_.shape[1]
        ls = np.exp(theta[:d])
        g = float(np.exp(theta[d])) if self._free_nugget() else float(self.nugget)
        return ls, g

    def _profile(self, theta):
        """Concentrated likelihood terms for log-hyperparameters ``theta``."""
        ls, g = self._unpack(theta)
        n = len(self._y)
        C = corr_matrix(self.X_train_, self.X_train_, ls, self.kernel)
        C[np.diag_indices(n)] += g
        L, jitter = _cholesky_with_jitter(C)
        ones = np.ones(n)
        Li1 = solve_triangular(L, ones, lower=True, check_finite=False)
        Liy = solve_triangular(L, self._y, lower=True, check_finite=False)
        m = float(Li1 @ Liy / (Li1 @ Li1))
        resid = Liy - m * Li1
        s2 = float(resid @ resid) / n
        return {"L": L, "jitter": jitter, "ls": ls, "g": g, "m": m, "s2": s2,
                "logdet": 2.0 * float(np.sum(np.log(np.diag(L))))}

    def _loglik(self, prof):
        n = len(self._y)
        s2 = max(prof["s2"], 1e-300)
        return -0.5 * (n * math.log(s2) + prof["logdet"] + n * (1.0 + math.log(2 * math.pi)))

    def _objective(self, theta):
        try:
            prof = self._profile(theta)
        except FitFailed:
            return np.inf
        # jitter acts as an unrequested nugget and flatters near-singular matrices
        if prof["jitter"] > 0 and not self._allow_jitter:
            return np.inf
        return -self._loglik(prof)

    # ------------------------------------------------------------------- fit
    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        if self.kernel not in KERNELS:
            raise ValueError(f"unknown kernel {self.kernel!r}")
        if not self._free_nugget() and (self.nugget < 0 or not np.isfinite(self.nugget)):
            raise ValueError("nugget must be a non-negative number or 'free'")
        n, d = X.shape
        if n < 2:
            raise FitFailed("a GP needs at least two rows")
        if not self._free_nugget() and self.nugget == 0:
            if len(np.unique(X, axis=0)) < n:
                raise FitFailed("duplicate inputs make the kernel matrix singular without a nugget")
        rng = check_generator(self.random_state)

        if self.scale_inputs:
            self.x_center_ = X.mean(axis=0)
            sd = X.std(axis=0)
            self.x_scale_ = np.where(sd > 0, sd, 1.0)
        else:
            self.x_center_ = np.zeros(d)
            self.x_scale_ = np.ones(d)
        Xs = (X - self.x_center_) / self.x_scale_
        self.X_train_ = Xs
        self.n_features_in_ = d
        self._y = y.astype(float)

        if np.ptp(y) == 0:
            # constant data: zero signal variance, mean equals the constant
            self.lengthscales_ = np.ptp(Xs, axis=0) / 2 + (np.ptp(Xs, axis=0) == 0)
            self.nugget_ = 0.0 if self._free_nugget() else float(self.nugget)
            self.mean_const_ = float(y[0])
            self.signal_variance_ = 0.0
            self.jitter_ = 0.0
            self._L = None
            self.log_likelihood_ = self.initial_log_likelihood_ = np.inf
            return self

        span = np.ptp(Xs, axis=0)
        span = np.where(span > 0, span, 1.0)
        lo = np.log(_LS_RANGE[0] * span)
        hi = np.log(_LS_RANGE[1] * span)
        if self._free_nugget():
            lo = np.append(lo, math.log(_NUGGET_RANGE[0]))
            hi = np.append(hi, math.log(_NUGGET_RANGE[1]))
        start0 = np.log(span / 2)
        if self._free_nugget():
            start0 = np.append(start0, math.log(1e-6))
        starts = [start0] + [rng.uniform(lo, hi) for _ in range(max(self.n_starts, 1) - 1)]
        self._allow_jitter = False
        values = np.array([self._objective(t) for t in starts])
        if not np.isfinite(values).any():
            # shorter lengthscales push the correlation matrix towards the identity
            for t in np.linspace(start0, lo if not self._free_nugget() else np.append(lo[:-1], start0[-1]), 12)[1:]:
                v = self._objective(t)
                if np.isfinite(v):
                    starts.append(t)
                    values = np.append(values, v)
                    break
        if not np.isfinite(values).any():
            self._allow_jitter = True
            values = np.array([self._objective(t) for t in starts])
        self.initial_log_likelihood_ = -values[0]
        if not np.isfinite(values).any():
            raise FitFailed("no hyperparameter candidate gave a factorizable kernel matrix")

        best_theta, best_val = starts[int(np.argmin(values))], float(np.min(values))
        bounds = list(zip(lo, hi))
        for i in np.argsort(values, kind="stable")[: self.n_refine]:
            if not np.isfinite(values[i]):
                continue
            res = minimize(self._objective, starts[i], method="Nelder-Mead", bounds=bounds,
                           options={"maxiter": self.max_iter, "xatol": 1e-3, "fatol": 1e-6})
            if np.isfinite(res.fun) and res.fun < best_val:
                best_theta, best_val = np.asarray(res.x), float(res.fun)

        prof = self._profile(best_theta)
        self.lengthscales_ = prof["ls"]
        self.nugget_ = prof["g"]
        self.jitter_ = prof["jitter"]
        self.mean_const_ = prof["m"]
        self.signal_variance_ = prof["s2"]
        self.log_likelihood_ = self._loglik(prof)
        self._L = prof["L"]
        resid = solve_triangular(self._L, self._y - self.mean_const_, lower=True, check_finite=False)
        self._alpha = solve_triangular(self._L.T, resid, lower=False, check_finite=False)
        return self

    # ---------------------------------------------------------------- predict
    def _scale(self, X):
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return (X - self.x_center_) / self.x_scale_

    def kernel_matrix(self, X1, X2=None):
        """Fitted covariance ``s2 * R`` between two sets of raw inputs."""
        check_is_fitted(self, "lengthscales_")
        A = self._scale(X1)
        B = A if X2 is None else self._scale(X2)
        return self.signal_variance_ * corr_matrix(A, B, self.lengthscales_, self.kernel)

    def predict(self, X, return_std=False):
        check_is_fitted(self, "lengthscales_")
        Xs = self._scale(X)
        if self._L is None:
            mean = np.full(len(Xs), self.mean_const_)
            return (mean, np.zeros(len(Xs))) if return_std else mean
        r = corr_matrix(Xs, self.X_train_, self.lengthscales_, self.kernel)
        mean = self.mean_const_ + r @ self._alpha
        if not return_std:
            return mean
        v = solve_triangular(self._L, r.T, lower=True, check_finite=False)
        var = self.signal_variance_ * (1.0 + self.nugget_ + self.jitter_ - np.sum(v**2, axis=0))
        return mean, np.sqrt(np.maximum(var, 0.0))

    def log_marginal_likelihood(self):
        check_is_fitted(self, "lengthscales_")
        return self.log_likelihood_

    def summary(self):
        """JSON-friendly fitted hyperparameters."""
        check_is_fitted(self, "lengthscales_")
        return {"kernel": self.kernel, "lengthscales": [float(v) for v in self.lengthscales_],
                "signal_variance": float(self.signal_variance_), "mean_const": float(self.mean_const_),
                "nugget": float(self.nugget_), "jitter": float(self.jitter_),
                "scale_inputs": bool(self.scale_inputs), "log_likelihood": float(self.log_likelihood_)}
