"""Regression random forest with explicit predictive-variance estimators.

Trees are grown on full-size bootstrap resamples with variance-reduction
splits.  Every leaf stores the mean and variance of the in-bag rows it
holds (counted with multiplicity), and the forest keeps the in-bag count
matrix ``inbag_[b, i]`` so the jackknife-after-bootstrap estimator can be
computed.  Missing values (inactive parameters) are routed at each split to
the child that received more non-missing training rows.
"""

import logging
import math

import numpy as np
from numba import njit
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .._validation import check_generator

logger = logging.getLogger(__name__)

VARIANCE_ESTIMATORS = ("jackknife", "esd", "ltv")


# ---------------------------------------------------------------- variance
def jackknife_variance(tree_preds, inbag):
    """Jackknife-after-bootstrap variance with Monte Carlo bias correction.

    Parameters
    ----------
    tree_preds : ndarray of shape (B, m)
        Per-tree predictions ``t_b(x)``.
    inbag : ndarray of shape (B, n)
        In-bag counts ``N_{b,i}``.

    Rows that are in-bag for every tree have no leave-one-out predictor;
    they are skipped and ``n`` is replaced by the number of rows used.
    """
    tree_preds = np.asarray(tree_preds, float)
    B = tree_preds.shape[0]
    fbar = tree_preds.mean(axis=0)
    oob = np.asarray(inbag) == 0
    b_i = oob.sum(axis=0)
    used = b_i > 0
    n_used = int(used.sum())
    if n_used < inbag.shape[1]:
        logger.warning("%d training rows never out-of-bag; skipped in jackknife", inbag.shape[1] - n_used)
    if n_used == 0:
        return np.zeros_like(fbar)
    f_minus = (oob[:, used].T.astype(float) @ tree_preds) / b_i[used, None]
    spread = ((n_used - 1) / n_used) * np.sum((f_minus - fbar) ** 2, axis=0)
    correction = (math.e - 1) * n_used / B**2 * np.sum((tree_preds - fbar) ** 2, axis=0)
    return np.maximum(spread - correction, 0.0)


def esd_variance(leaf_means):
    """Naive ensemble variance of the per-tree leaf means."""
    mu = np.asarray(leaf_means, float)
    return np.sum((mu - mu.mean(axis=0)) ** 2, axis=0) / (mu.shape[0] - 1)


def ltv_variance(leaf_means, leaf_vars, min_leaf_variance=1e-2):
    """Law of total variance: mean leaf variance plus variance of leaf means.

    Leaf variances below ``min_leaf_variance`` are raised to it first.
    """
    mu = np.asarray(leaf_means, float)
    var = np.maximum(np.asarray(leaf_vars, float), min_leaf_variance)
    total = np.mean(var + mu**2, axis=0) - mu.mean(axis=0) ** 2
    return np.maximum(total, 0.0)


# ------------------------------------------------------------------ trees
@njit(cache=True)
def _split_node(X, y, idx, start, end, feats_buf, mtry, min_bucket, extratrees):
    n_feat = X.shape[1]
    size = end - start
    total = 0.0
    for k in range(start, end):
        total += y[idx[k]]
    parent_score = total * total / size

    # partial Fisher-Yates draw of mtry candidate features
    for j in range(n_feat):
        feats_buf[j] = j
    for j in range(mtry):
        r = j + np.random.randint(n_feat - j)
        tmp = feats_buf[j]
        feats_buf[j] = feats_buf[r]
        feats_buf[r] = tmp

    best_score = parent_score
    best_feat = -1
    best_thr = 0.0
    best_miss_left = True
    vals = np.empty(size)
    ys = np.empty(size)
    for jj in range(mtry):
        f = feats_buf[jj]
        nm = 0
        n_miss = 0
        sum_miss = 0.0
        for k in range(start, end):
            v = X[idx[k], f]
            if np.isnan(v):
                n_miss += 1
                sum_miss += y[idx[k]]
            else:
                vals[nm] = v
                ys[nm] = y[idx[k]]
                nm += 1
        if nm < 2:
            continue
        order = np.argsort(vals[:nm])
        sv = vals[:nm][order]
        sy = ys[:nm][order]
        if sv[0] == sv[nm - 1]:
            continue
        et_pos = -1
        thr = 0.0
        if extratrees:
            thr = sv[0] + np.random.random() * (sv[nm - 1] - sv[0])
            if thr >= sv[nm - 1]:
                continue
            et_pos = 0
            while et_pos + 1 < nm and sv[et_pos + 1] <= thr:
                et_pos += 1
        sum_all = 0.0
        for k in range(nm):
            sum_all += sy[k]
        sl = 0.0
        for k in range(nm - 1):
            sl += sy[k]
            if sv[k] == sv[k + 1]:
                continue
            if extratrees and k != et_pos:
                continue
            nl = k + 1
            nr = nm - nl
            miss_left = nl >= nr
            cl = nl + n_miss if miss_left else nl
            cr = nr if miss_left else nr + n_miss
            if cl < min_bucket or cr < min_bucket:
                continue
            s_left = sl + sum_miss if miss_left else sl
            s_right = sum_all - sl + (0.0 if miss_left else sum_miss)
            score = s_left * s_left / cl + s_right * s_right / cr
            if score > best_score + 1e-12 * abs(best_score) + 1e-300:
                best_score = score
                best_feat = f
                if extratrees:
                    best_thr = thr
                else:
                    best_thr = 0.5 * (sv[k] + sv[k + 1])
                    if best_thr >= sv[k + 1]:
                        best_thr = sv[k]
                best_miss_left = miss_left
    return best_feat, best_thr, best_miss_left


@njit(cache=True)
def _grow_tree(X, y, counts, mtry, min_node_size, min_bucket, extratrees,
               feat, thr, left, right, miss_left, leaf_mean, leaf_var, offset):
    n = X.shape[0]
    m = 0
    for i in range(n):
        m += counts[i]
    idx = np.empty(m, dtype=np.int64)
    pos = 0
    for i in range(n):
        for _ in range(counts[i]):
            idx[pos] = i
            pos += 1
    buf = np.empty(m, dtype=np.int64)
    feats_buf = np.empty(X.shape[1], dtype=np.int64)

    stack_node = np.empty(2 * m + 2, dtype=np.int64)
    stack_start = np.empty(2 * m + 2, dtype=np.int64)
    stack_end = np.empty(2 * m + 2, dtype=np.int64)
    top = 0
    stack_node[0] = offset
    stack_start[0] = 0
    stack_end[0] = m
    top = 1
    n_nodes = 1
    while top > 0:
        top -= 1
        node = stack_node[top]
        start = stack_start[top]
        end = stack_end[top]
        size = end - start
        mean = 0.0
        for k in range(start, end):
            mean += y[idx[k]]
        mean /= size
        var = 0.0
        for k in range(start, end):
            d = y[idx[k]] - mean
            var += d * d
        var /= size
        leaf_mean[node] = mean
        leaf_var[node] = var
        left[node] = -1
        right[node] = -1
        feat[node] = -1
        if size < min_node_size or size < 2 * min_bucket or var <= 0.0:
            continue
        f, t, ml = _split_node(X, y, idx, start, end, feats_buf, mtry, min_bucket, extratrees)
        if f < 0:
            continue
        # stable partition of idx[start:end]
        nl = 0
        nr = 0
        for k in range(start, end):
            v = X[idx[k], f]
            go_left = ml if np.isnan(v) else v <= t
            if go_left:
                idx[start + nl] = idx[k]
                nl += 1
            else:
                buf[nr] = idx[k]
                nr += 1
        for k in range(nr):
            idx[start + nl + k] = buf[k]
        feat[node] = f
        thr[node] = t
        miss_left[node] = ml
        left[node] = offset + n_nodes
        right[node] = offset + n_nodes + 1
        stack_node[top] = offset + n_nodes
        stack_start[top] = start
        stack_end[top] = start + nl
        top += 1
        stack_node[top] = offset + n_nodes + 1
        stack_start[top] = start + nl
        stack_end[top] = end
        top += 1
        n_nodes += 2
    return n_nodes


@njit(cache=True)
def _grow_forest(X, y, inbag, seeds, mtry, min_node_size, min_bucket, extratrees):
    B = inbag.shape[0]
    n = X.shape[0]
    cap = B * (2 * n + 1)
    feat = np.empty(cap, dtype=np.int64)
    thr = np.zeros(cap)
    left = np.empty(cap, dtype=np.int64)
    right = np.empty(cap, dtype=np.int64)
    miss_left = np.zeros(cap, dtype=np.bool_)
    leaf_mean = np.zeros(cap)
    leaf_var = np.zeros(cap)
    roots = np.empty(B, dtype=np.int64)
    offset = 0
    for b in range(B):
        np.random.seed(seeds[b])
        roots[b] = offset
        offset += _grow_tree(X, y, inbag[b], mtry, min_node_size, min_bucket, extratrees,
                             feat, thr, left, right, miss_left, leaf_mean, leaf_var, offset)
    return (feat[:offset], thr[:offset], left[:offset], right[:offset], miss_left[:offset],
            leaf_mean[:offset], leaf_var[:offset], roots)


@njit(cache=True)
def _apply_forest(X, feat, thr, left, right, miss_left, roots):
    B = roots.shape[0]
    m = X.shape[0]
    leaves = np.empty((B, m), dtype=np.int64)
    for b in range(B):
        for i in range(m):
            node = roots[b]
            while left[node] >= 0:
                v = X[i, feat[node]]
                if np.isnan(v):
                    node = left[node] if miss_left[node] else right[node]
                elif v <= thr[node]:
                    node = left[node]
                else:
                    node = right[node]
            leaves[b, i] = node
    return leaves


class RandomForestSurrogate(RegressorMixin, BaseEstimator):
    """Bootstrap regression forest that predicts a mean and a standard deviation.

    Parameters
    ----------
    n_trees : int, default=500
    variance_estimator : {"jackknife", "esd", "ltv"}, default="ltv"
    min_node_size : int, default=3
        Nodes with fewer in-bag rows are not split.
    min_bucket : int, default=3
        Minimum in-bag rows per leaf.
    mtry_ratio : float, default=5/6
        Fraction of features tried per split (rounded up).
    min_leaf_variance : float, default=1e-2
        Floor on leaf variances, used by the ``ltv`` estimator only.
    extratrees : bool, default=False
        Draw one uniform random threshold per candidate feature.
    random_state : int, Generator or None
    """

    def __init__(self, n_trees=500, variance_estimator="ltv", min_node_size=3, min_bucket=3,
                 mtry_ratio=5 / 6, min_leaf_variance=1e-2, extratrees=False, random_state=None):
        self.n_trees = n_trees
        self.variance_estimator = variance_estimator
        self.min_node_size = min_node_size
        self.min_bucket = min_bucket
        self.mtry_ratio = mtry_ratio
        self.min_leaf_variance = min_leaf_variance
        self.extratrees = extratrees
        self.random_state = random_state

    def fit(self, X, y):
        X = check_array(X, ensure_all_finite="allow-nan", dtype=np.float64)
        y = np.asarray(y, dtype=np.float64).ravel()
        if len(y) != len(X):
            raise ValueError("X and y have inconsistent lengths")
        if len(y) < 2:
            raise ValueError("a forest needs at least two rows")
        if self.n_trees < 2:
            raise ValueError("n_trees must be >= 2")
        if self.variance_estimator not in VARIANCE_ESTIMATORS:
            raise ValueError(f"unknown variance estimator {self.variance_estimator!r}")
        rng = check_generator(self.random_state)
        n, p = X.shape
        draws = rng.integers(0, n, size=(self.n_trees, n))
        inbag = np.zeros((self.n_trees, n), dtype=np.int64)
        np.add.at(inbag, (np.arange(self.n_trees)[:, None], draws), 1)
        seeds = rng.integers(0, 2**31 - 1, size=self.n_trees).astype(np.int64)
        mtry = max(1, min(p, math.ceil(self.mtry_ratio * p)))
        (self.feature_, self.threshold_, self.left_, self.right_, self.missing_left_,
         self.leaf_mean_, self.leaf_var_, self.roots_) = _grow_forest(
            X, y, inbag, seeds, mtry, self.min_node_size, self.min_bucket, bool(self.extratrees))
        self.inbag_ = inbag
        self.n_features_in_ = p
        self.X_train_ = X
        self.y_train_ = y
        return self

    def apply(self, X):
        """Leaf node index per tree, shape ``(B, m)``."""
        check_is_fitted(self, "roots_")
        X = check_array(X, ensure_all_finite="allow-nan", dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return _apply_forest(X, self.feature_, self.threshold_, self.left_, self.right_,
                             self.missing_left_, self.roots_)

    def leaf_stats(self, X):
        """Per-tree leaf means ``mu_b(x)`` and variances ``sigma_b^2(x)``."""
        leaves = self.apply(X)
        return self.leaf_mean_[leaves], self.leaf_var_[leaves]

    def predict(self, X, return_std=False, estimator=None):
        mu, var = self.leaf_stats(X)
        mean = mu.mean(axis=0)
        if not return_std:
            return mean
        estimator = estimator or self.variance_estimator
        if estimator == "jackknife":
            v = jackknife_variance(mu, self.inbag_)
        elif estimator == "esd":
            v = esd_variance(mu)
        elif estimator == "ltv":
            v = ltv_variance(mu, var, self.min_leaf_variance)
        else:
            raise ValueError(f"unknown variance estimator {estimator!r}")
        return mean, np.sqrt(v)

    def summary(self):
        """JSON-friendly description of the fitted forest."""
        check_is_fitted(self, "roots_")
        sizes = np.diff(np.append(self.roots_, len(self.feature_)))
        return {"n_trees": int(self.n_trees), "variance_estimator": self.variance_estimator,
                "n_train": int(self.inbag_.shape[1]), "mean_nodes_per_tree": float(sizes.mean()),
                "n_leaves": int(np.sum(self.left_ < 0))}
