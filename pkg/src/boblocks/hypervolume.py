"""Dominated hypervolume for minimization problems."""

import numpy as np


def hypervolume(Y, ref):
    """Volume dominated by the rows of ``Y`` and bounded by ``ref``.

    Points not strictly better than ``ref`` in every objective contribute
    nothing.  Two objectives use a sweep line; more objectives slice along
    the last axis recursively, which is fine for the small fronts seen here.
    """
    Y = np.asarray(Y, float).reshape(-1, len(ref))
    ref = np.asarray(ref, float)
    Y = Y[np.all(Y < ref, axis=1)]
    if len(Y) == 0:
        return 0.0
    return float(_hv(Y, ref))


def _hv(Y, ref):
    k = Y.shape[1]
    if k == 1:
        return ref[0] - Y[:, 0].min()
    if k == 2:
        order = np.lexsort((Y[:, 1], Y[:, 0]))
        volume, best_y2 = 0.0, ref[1]
        for y1, y2 in Y[order]:
            if y2 < best_y2:
                volume += (ref[0] - y1) * (best_y2 - y2)
                best_y2 = y2
        return volume
    order = np.argsort(Y[:, -1])
    Y = Y[order]
    volume = 0.0
    for i in range(len(Y)):
        upper = Y[i + 1, -1] if i + 1 < len(Y) else ref[-1]
        depth = upper - Y[i, -1]
        if depth > 0:
            volume += depth * _hv(Y[: i + 1, :-1], ref[:-1])
    return volume


def hypervolume_improvement(y_new, front, ref):
    """Gain in dominated hypervolume from adding ``y_new`` to ``front``."""
    front = np.asarray(front, float).reshape(-1, len(ref))
    base = hypervolume(front, ref)
    return hypervolume(np.vstack([front, np.asarray(y_new, float)[None, :]]), ref) - base
